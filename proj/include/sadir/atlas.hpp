#pragma once

// Variational atlas building: minimize
//   sum_n (1/sigma^2) ||S o phi_n - Y_n||^2 + <L v_n(0), v_n(0)> + reg_weight * |grad S|^2
// over the atlas S and per-subject initial velocities v_n(0).

#include <span>
#include <vector>

#include "sadir/geodesic.hpp"
#include "sadir/grid.hpp"
#include "sadir/metric.hpp"

namespace sadir {

struct AtlasConfig {
    int outer_iters = 60;
    int velocity_steps = 1;
    int atlas_steps = 1;
    // Velocity steps are taken along the Sobolev gradient K(grad) scaled by
    // sigma^2/2; atlas steps along grad scaled by sigma^2/(2N), so 1.0 is the
    // exact minimizer under identity warps.
    double lr_velocity = 0.5;
    double lr_atlas = 0.5;
    double reg_weight = 0.0;
    double sigma = 0.02;
};

struct AtlasState {
    ScalarVolume atlas;
    std::vector<VectorField> velocities;
    double sigma = 0.02;
    double reg_weight = 0.0;
    std::vector<double> energy_trace;
};

struct EnergyTerms {
    double data = 0.0;       // sum_n ||S o phi_n - Y_n||^2 / sigma^2
    double velocity = 0.0;   // sum_n <L v_n, v_n>
    double smoothness = 0.0; // reg_weight * sum |grad S|^2
    double total() const { return data + velocity + smoothness; }
};

// Voxelwise mean atlas, zero velocities. Throws on empty/mismatched data.
AtlasState init_atlas_state(std::span<const ScalarVolume> dataset, double sigma = 0.02, double reg_weight = 0.0);

EnergyTerms atlas_energy_terms(const AtlasState &state, std::span<const ScalarVolume> dataset,
                               const FluidMetric &metric, const ShootingConfig &shoot_cfg);
double atlas_energy(const AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                    const ShootingConfig &shoot_cfg);

// ||S o phi(v) - Y||^2 (no sigma scaling).
double subject_residual(const ScalarVolume &atlas, const ScalarVolume &subject, const VectorField &v0,
                        const FluidMetric &metric, const ShootingConfig &shoot_cfg);

// Exact L2 gradients of the discrete energy.
VectorField grad_velocity(const AtlasState &state, std::size_t n, std::span<const ScalarVolume> dataset,
                          const FluidMetric &metric, const ShootingConfig &shoot_cfg);
ScalarVolume grad_atlas(const AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                        const ShootingConfig &shoot_cfg);

// Smoothness penalty sum_b |D_b S|^2 and its gradient.
double atlas_smoothness(const ScalarVolume &s);
ScalarVolume atlas_smoothness_grad(const ScalarVolume &s);

// Alternating descent starting from `state`; appends to state.energy_trace
// (initial energy first if the trace is empty). Step sizes halve after two
// consecutive energy increases; an iteration whose shooting diverges is undone
// (its trace entry repeats the previous energy) and also halves them.
void refine_atlas(AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                  const AtlasConfig &cfg, const ShootingConfig &shoot_cfg);

AtlasState fit_atlas(std::span<const ScalarVolume> dataset, const FluidMetric &metric, const AtlasConfig &cfg,
                     const ShootingConfig &shoot_cfg = {});

} // namespace sadir
