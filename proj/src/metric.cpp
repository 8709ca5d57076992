#include "sadir/metric.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "sadir/errors.hpp"

namespace sadir {

namespace {
// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex &planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

struct FluidMetric::FftPlans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    explicit FftPlans(const GridSpec &g) {
        const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
        std::vector<double> real(g.size());
        std::vector<std::complex<double>> spec(static_cast<std::size_t>(nz) * ny * (nx / 2 + 1));
        auto *c = reinterpret_cast<fftw_complex *>(spec.data());
        std::lock_guard lock(planner_mutex());
        forward = fftw_plan_dft_r2c_3d(nz, ny, nx, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
        backward = fftw_plan_dft_c2r_3d(nz, ny, nx, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    ~FftPlans() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }
    FftPlans(const FftPlans &) = delete;
    FftPlans &operator=(const FftPlans &) = delete;
};

FluidMetric::FluidMetric(const GridSpec &grid, const MetricParams &params) : grid_(grid), params_(params) {
    grid.validate();
    if (!(params.alpha > 0.0)) throw ParameterError("metric alpha must be positive");
    if (!(params.gamma > 0.0)) throw ParameterError("metric gamma must be positive");
    if (params.power < 1) throw ParameterError("metric power must be >= 1");

    const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    auto lap = [&](int k, int axis) {
        const double h = grid.spacing[axis];
        return 2.0 * (1.0 - std::cos(2.0 * std::numbers::pi * k / grid.dims[axis])) / (h * h);
    };
    symbol_.resize(grid.size());
    for (int kz = 0; kz < nz; ++kz)
        for (int ky = 0; ky < ny; ++ky)
            for (int kx = 0; kx < nx; ++kx) {
                const double base = params.alpha * (lap(kx, 0) + lap(ky, 1) + lap(kz, 2)) + params.gamma;
                symbol_[grid.index(kx, ky, kz)] = std::pow(base, params.power);
            }
    const int hx = nx / 2 + 1;
    half_symbol_.resize(static_cast<std::size_t>(nz) * ny * hx);
    for (int kz = 0; kz < nz; ++kz)
        for (int ky = 0; ky < ny; ++ky)
            for (int kx = 0; kx < hx; ++kx)
                half_symbol_[kx + static_cast<std::size_t>(hx) * (ky + static_cast<std::size_t>(ny) * kz)] =
                    symbol_[grid.index(kx, ky, kz)];
    plans_ = std::make_shared<const FftPlans>(grid);
}

void FluidMetric::filter(std::span<const double> in, std::span<double> out, Op op) const {
    const std::size_t n = grid_.size();
    if (in.size() != n || out.size() != n) throw DimensionError("metric: channel length mismatch");
    std::vector<double> real(in.begin(), in.end());
    std::vector<std::complex<double>> spec(half_symbol_.size());
    auto *c = reinterpret_cast<fftw_complex *>(spec.data());
    fftw_execute_dft_r2c(plans_->forward, real.data(), c);
    const double norm = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < spec.size(); ++k)
        spec[k] *= multiplier(k, op) * norm;
    fftw_execute_dft_c2r(plans_->backward, c, real.data());
    std::copy(real.begin(), real.end(), out.begin());
}

double FluidMetric::multiplier(std::size_t k, Op op) const {
    switch (op) {
    case Op::L: return half_symbol_[k];
    case Op::K: return 1.0 / half_symbol_[k];
    case Op::SqrtL: return std::sqrt(half_symbol_[k]);
    case Op::SqrtK: return 1.0 / std::sqrt(half_symbol_[k]);
    }
    return 1.0;
}

VectorField FluidMetric::apply(const VectorField &v, Op op, const char *what) const {
    require_same_grid(v.grid, grid_, what);
    VectorField out(grid_);
    for (int c = 0; c < 3; ++c) filter(v.channel(c), out.channel(c), op);
    return out;
}

void FluidMetric::apply_L(std::span<const double> in, std::span<double> out) const { filter(in, out, Op::L); }
void FluidMetric::apply_K(std::span<const double> in, std::span<double> out) const { filter(in, out, Op::K); }

VectorField FluidMetric::apply_L(const VectorField &v) const { return apply(v, Op::L, "apply_L"); }
VectorField FluidMetric::apply_K(const VectorField &m) const { return apply(m, Op::K, "apply_K"); }
VectorField FluidMetric::apply_sqrt_L(const VectorField &v) const { return apply(v, Op::SqrtL, "apply_sqrt_L"); }
VectorField FluidMetric::apply_sqrt_K(const VectorField &v) const { return apply(v, Op::SqrtK, "apply_sqrt_K"); }

FluidMetric build_metric(const GridSpec &grid, double alpha, double gamma, int power) {
    return FluidMetric(grid, MetricParams{alpha, gamma, power});
}

double velocity_norm(const FluidMetric &metric, const VectorField &v) {
    require_same_grid(v.grid, metric.grid(), "velocity_norm");
    const auto m = metric.apply_L(v);
    return dot(m.data, v.data) * v.grid.voxel_volume();
}

} // namespace sadir
