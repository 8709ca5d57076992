#pragma once

// Sobolev metric L = (-alpha * Lap + gamma * I)^power on periodic grids and its
// inverse K, both diagonal in the discrete Fourier basis.

#include <memory>
#include <span>
#include <vector>

#include "sadir/grid.hpp"

namespace sadir {

struct MetricParams {
    double alpha = 3.0;
    double gamma = 1.0;
    int power = 3;
};

class FluidMetric {
public:
    FluidMetric(const GridSpec &grid, const MetricParams &params);

    const GridSpec &grid() const { return grid_; }
    const MetricParams &params() const { return params_; }

    // Symbol over the full frequency grid (x-fastest, k_d in [0, N_d)).
    std::span<const double> symbol() const { return symbol_; }
    double symbol_at(int kx, int ky, int kz) const { return symbol_[grid_.index(kx, ky, kz)]; }

    VectorField apply_L(const VectorField &v) const;
    VectorField apply_K(const VectorField &m) const;
    // Symbol^(1/2) and symbol^(-1/2); apply_sqrt_K(apply_sqrt_K(m)) = K m.
    VectorField apply_sqrt_L(const VectorField &v) const;
    VectorField apply_sqrt_K(const VectorField &v) const;

    // Single-channel versions; `in` and `out` may alias.
    void apply_L(std::span<const double> in, std::span<double> out) const;
    void apply_K(std::span<const double> in, std::span<double> out) const;

private:
    struct FftPlans;
    enum class Op { L, K, SqrtL, SqrtK };

    double multiplier(std::size_t k, Op op) const;
    void filter(std::span<const double> in, std::span<double> out, Op op) const;
    VectorField apply(const VectorField &v, Op op, const char *what) const;

    GridSpec grid_;
    MetricParams params_;
    std::vector<double> symbol_;
    std::vector<double> half_symbol_; // r2c layout: nz * ny * (nx/2 + 1)
    std::shared_ptr<const FftPlans> plans_;
};

// Throws ParameterError for alpha <= 0, gamma <= 0 or power < 1.
FluidMetric build_metric(const GridSpec &grid, double alpha = 3.0, double gamma = 1.0, int power = 3);

// <L v, v> summed over voxels and channels, times the voxel volume.
double velocity_norm(const FluidMetric &metric, const VectorField &v);

} // namespace sadir
