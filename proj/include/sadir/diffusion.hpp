#pragma once

// DDPM machinery over velocity fields: variance schedules, closed-form and
// step-wise noising, ancestral reverse steps and the sampling loop.

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sadir/grid.hpp"

namespace sadir {

using Rng = std::mt19937_64;

void fill_normal(Rng &rng, std::span<double> out, double stddev = 1.0);
VectorField normal_field(Rng &rng, const GridSpec &grid, double stddev = 1.0);

// Sampler conditioning: atlas, embedded slices and their plane mask.
struct ConditioningPack {
    ScalarVolume atlas;
    ScalarVolume slices_embedded;
    ScalarVolume slice_mask;

    const GridSpec &grid() const { return atlas.grid; }
    // Throws DimensionError/ParameterError on grid mismatch or non-binary mask.
    void validate() const;
};

// Tables indexed by tau - 1 for tau in [1, T].
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> posterior_sigma;

    double beta_at(int tau) const { return beta[static_cast<std::size_t>(tau - 1)]; }
    double alpha_at(int tau) const { return alpha[static_cast<std::size_t>(tau - 1)]; }
    double alpha_bar_at(int tau) const { return tau == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(tau - 1)]; }
    double sigma_at(int tau) const { return posterior_sigma[static_cast<std::size_t>(tau - 1)]; }

    // Throws ParameterError unless 1 <= tau <= T.
    void check_tau(int tau) const;
};

// Derived tables from raw betas in [0, 1); no monotonicity requirement.
NoiseSchedule schedule_from_betas(std::vector<double> betas);

// beta linear from beta_start to beta_end; requires 0 < start < end < 1.
NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

// Linear schedule with the 1e-4 .. 0.02 endpoints rescaled by 1000 / T, so the
// terminal alpha_bar is near zero for any T.
NoiseSchedule default_schedule(int T);

VectorField forward_sample(const NoiseSchedule &s, const VectorField &y0, int tau, const VectorField &eps);
VectorField forward_step(const NoiseSchedule &s, const VectorField &y_prev, int tau, const VectorField &eps);
VectorField predict_x0(const NoiseSchedule &s, const VectorField &y_tau, int tau, const VectorField &eps_hat);
VectorField reverse_step(const NoiseSchedule &s, const VectorField &y_tau, int tau, const VectorField &eps_hat,
                         const VectorField &z);

using EpsPredictor = std::function<VectorField(const VectorField &y_tau, int tau, const ConditioningPack &cond)>;

// y^T ~ N(0, init_std^2 I), then reverse steps T..1 (z = 0 on the last one).
VectorField sample(const NoiseSchedule &s, const EpsPredictor &denoiser, const ConditioningPack &cond, Rng &rng,
                   double init_std = 0.1);

} // namespace sadir
