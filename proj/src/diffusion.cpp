#include "sadir/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sadir/errors.hpp"

namespace sadir {

void fill_normal(Rng &rng, std::span<double> out, double stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto &x : out) x = stddev * dist(rng);
}

VectorField normal_field(Rng &rng, const GridSpec &grid, double stddev) {
    VectorField f(grid);
    fill_normal(rng, f.data, stddev);
    return f;
}

void ConditioningPack::validate() const {
    require_same_grid(atlas.grid, slices_embedded.grid, "conditioning pack");
    require_same_grid(atlas.grid, slice_mask.grid, "conditioning pack");
    for (double m : slice_mask.data)
        if (m != 0.0 && m != 1.0) throw ParameterError("slice mask must be binary");
}

void NoiseSchedule::check_tau(int tau) const {
    if (tau < 1 || tau > T)
        throw ParameterError("diffusion step " + std::to_string(tau) + " outside [1, " + std::to_string(T) + "]");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    double prod = 1.0;
    for (double b : s.beta) {
        if (!(b >= 0.0 && b < 1.0)) throw ParameterError("beta must lie in [0, 1)");
        const double prev = prod;
        prod *= 1.0 - b;
        s.alpha.push_back(1.0 - b);
        s.alpha_bar.push_back(prod);
        const double denom = 1.0 - prod;
        s.posterior_sigma.push_back(denom > 0.0 ? std::sqrt(b * (1.0 - prev) / denom) : 0.0);
    }
    return s;
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ParameterError("schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw ParameterError("schedule needs 0 < beta_start < beta_end < 1");
    std::vector<double> b(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        b[static_cast<std::size_t>(t)] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
    return schedule_from_betas(std::move(b));
}

NoiseSchedule default_schedule(int T) {
    if (T < 1) throw ParameterError("schedule needs T >= 1");
    const double scale = 1000.0 / T;
    return linear_schedule(T, std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999));
}

namespace {
void same(const VectorField &a, const VectorField &b, const char *what) { require_same_grid(a.grid, b.grid, what); }
} // namespace

VectorField forward_sample(const NoiseSchedule &s, const VectorField &y0, int tau, const VectorField &eps) {
    s.check_tau(tau);
    same(y0, eps, "forward_sample");
    const double a = std::sqrt(s.alpha_bar_at(tau)), b = std::sqrt(1.0 - s.alpha_bar_at(tau));
    VectorField out(y0.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * y0.data[i] + b * eps.data[i];
    return out;
}

VectorField forward_step(const NoiseSchedule &s, const VectorField &y_prev, int tau, const VectorField &eps) {
    s.check_tau(tau);
    same(y_prev, eps, "forward_step");
    const double a = std::sqrt(1.0 - s.beta_at(tau)), b = std::sqrt(s.beta_at(tau));
    VectorField out(y_prev.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * y_prev.data[i] + b * eps.data[i];
    return out;
}

VectorField predict_x0(const NoiseSchedule &s, const VectorField &y_tau, int tau, const VectorField &eps_hat) {
    s.check_tau(tau);
    same(y_tau, eps_hat, "predict_x0");
    const double a = std::sqrt(s.alpha_bar_at(tau)), b = std::sqrt(1.0 - s.alpha_bar_at(tau));
    VectorField out(y_tau.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (y_tau.data[i] - b * eps_hat.data[i]) / a;
    return out;
}

VectorField reverse_step(const NoiseSchedule &s, const VectorField &y_tau, int tau, const VectorField &eps_hat,
                         const VectorField &z) {
    s.check_tau(tau);
    same(y_tau, eps_hat, "reverse_step");
    same(y_tau, z, "reverse_step");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(tau));
    const double one_minus_ab = 1.0 - s.alpha_bar_at(tau);
    const double coef = one_minus_ab > 0.0 ? (1.0 - s.alpha_at(tau)) / std::sqrt(one_minus_ab) : 0.0;
    const double sigma = s.sigma_at(tau);
    VectorField out(y_tau.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = inv_sqrt_alpha * (y_tau.data[i] - coef * eps_hat.data[i]) + sigma * z.data[i];
    return out;
}

VectorField sample(const NoiseSchedule &s, const EpsPredictor &denoiser, const ConditioningPack &cond, Rng &rng,
                   double init_std) {
    VectorField y = normal_field(rng, cond.grid(), init_std);
    VectorField z(cond.grid());
    for (int tau = s.T; tau >= 1; --tau) {
        const VectorField eps_hat = denoiser(y, tau, cond);
        if (tau > 1)
            fill_normal(rng, z.data);
        else
            std::fill(z.data.begin(), z.data.end(), 0.0);
        y = reverse_step(s, y, tau, eps_hat, z);
    }
    return y;
}

} // namespace sadir
