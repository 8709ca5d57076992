#include "sadir/atlas.hpp"

#include <cmath>
#include <string>

#include "sadir/errors.hpp"
#include "sadir/parallel.hpp"

namespace sadir {

namespace {

void check_dataset(std::span<const ScalarVolume> dataset, const GridSpec &g) {
    if (dataset.empty()) throw ParameterError("atlas building needs at least one subject");
    for (const auto &y : dataset) require_same_grid(y.grid, g, "atlas dataset");
}

void check_state(const AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric) {
    check_dataset(dataset, state.atlas.grid);
    require_same_grid(state.atlas.grid, metric.grid(), "atlas metric");
    if (state.velocities.size() != dataset.size())
        throw DimensionError("atlas state has " + std::to_string(state.velocities.size()) + " velocities for " +
                             std::to_string(dataset.size()) + " subjects");
    if (!(state.sigma > 0.0)) throw ParameterError("atlas sigma must be positive");
}

ShootingConfig with_trajectory(ShootingConfig c) {
    c.store_trajectory = true;
    return c;
}

double ssd(const ScalarVolume &a, const ScalarVolume &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

} // namespace

AtlasState init_atlas_state(std::span<const ScalarVolume> dataset, double sigma, double reg_weight) {
    if (dataset.empty()) throw ParameterError("atlas building needs at least one subject");
    check_dataset(dataset, dataset.front().grid);
    if (!(sigma > 0.0)) throw ParameterError("atlas sigma must be positive");
    AtlasState s;
    s.atlas = ScalarVolume(dataset.front().grid);
    for (const auto &y : dataset)
        for (std::size_t i = 0; i < y.data.size(); ++i) s.atlas.data[i] += y.data[i];
    for (auto &v : s.atlas.data) v /= static_cast<double>(dataset.size());
    s.velocities.assign(dataset.size(), VectorField(s.atlas.grid));
    s.sigma = sigma;
    s.reg_weight = reg_weight;
    return s;
}

double atlas_smoothness(const ScalarVolume &s) {
    std::vector<double> d(s.data.size());
    double total = 0.0;
    for (int b = 0; b < 3; ++b) {
        partial(s.data, s.grid, b, 1.0 / s.grid.spacing[b], d);
        for (double x : d) total += x * x;
    }
    return total;
}

ScalarVolume atlas_smoothness_grad(const ScalarVolume &s) {
    ScalarVolume g(s.grid);
    std::vector<double> d(s.data.size());
    for (int b = 0; b < 3; ++b) {
        const double h = 1.0 / s.grid.spacing[b];
        partial(s.data, s.grid, b, h, d);
        for (auto &x : d) x *= 2.0;
        partial_transpose_add(d, s.grid, b, h, g.data);
    }
    return g;
}

double subject_residual(const ScalarVolume &atlas, const ScalarVolume &subject, const VectorField &v0,
                        const FluidMetric &metric, const ShootingConfig &shoot_cfg) {
    ShootingConfig c = shoot_cfg;
    c.store_trajectory = false;
    const auto traj = shoot(metric, v0, c);
    return ssd(warp(atlas, traj.transform), subject);
}

EnergyTerms atlas_energy_terms(const AtlasState &state, std::span<const ScalarVolume> dataset,
                               const FluidMetric &metric, const ShootingConfig &shoot_cfg) {
    check_state(state, dataset, metric);
    std::vector<double> data(dataset.size()), vel(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t n) {
        data[n] = subject_residual(state.atlas, dataset[n], state.velocities[n], metric, shoot_cfg);
        vel[n] = velocity_norm(metric, state.velocities[n]);
    });
    EnergyTerms e;
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        e.data += data[n] / (state.sigma * state.sigma);
        e.velocity += vel[n];
    }
    if (state.reg_weight > 0.0) e.smoothness = state.reg_weight * atlas_smoothness(state.atlas);
    if (!std::isfinite(e.total())) throw DivergenceError("atlas energy is not finite");
    return e;
}

double atlas_energy(const AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                    const ShootingConfig &shoot_cfg) {
    return atlas_energy_terms(state, dataset, metric, shoot_cfg).total();
}

VectorField grad_velocity(const AtlasState &state, std::size_t n, std::span<const ScalarVolume> dataset,
                          const FluidMetric &metric, const ShootingConfig &shoot_cfg) {
    check_state(state, dataset, metric);
    if (n >= dataset.size()) throw ParameterError("subject index " + std::to_string(n) + " out of range");
    const auto &v = state.velocities[n];
    const auto traj = shoot(metric, v, with_trajectory(shoot_cfg));
    ScalarVolume residual = warp(state.atlas, traj.transform);
    const double scale = 2.0 / (state.sigma * state.sigma);
    for (std::size_t i = 0; i < residual.data.size(); ++i)
        residual.data[i] = scale * (residual.data[i] - dataset[n].data[i]);
    const auto adj = warp_adjoint(residual, traj.transform, state.atlas);
    VectorField g = shoot_vjp(metric, traj, adj.d_u);
    const VectorField lv = metric.apply_L(v);
    const double vox = v.grid.voxel_volume();
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += 2.0 * vox * lv.data[i];
    return g;
}

ScalarVolume grad_atlas(const AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                        const ShootingConfig &shoot_cfg) {
    check_state(state, dataset, metric);
    ShootingConfig c = shoot_cfg;
    c.store_trajectory = false;
    const double scale = 2.0 / (state.sigma * state.sigma);
    std::vector<ScalarVolume> parts(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t n) {
        const auto traj = shoot(metric, state.velocities[n], c);
        ScalarVolume residual = warp(state.atlas, traj.transform);
        for (std::size_t i = 0; i < residual.data.size(); ++i)
            residual.data[i] = scale * (residual.data[i] - dataset[n].data[i]);
        parts[n] = warp_adjoint(residual, traj.transform, state.atlas).d_vol;
    });
    ScalarVolume g(state.atlas.grid);
    for (const auto &p : parts)
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += p.data[i];
    if (state.reg_weight > 0.0) {
        const auto sg = atlas_smoothness_grad(state.atlas);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += state.reg_weight * sg.data[i];
    }
    return g;
}

namespace {

// One outer iteration of velocity then atlas steps; returns the new energy.
double outer_step(AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                  const AtlasConfig &cfg, const ShootingConfig &shoot_cfg, double lr_v, double lr_a) {
    const double s2 = state.sigma * state.sigma;
    const double n_subj = static_cast<double>(dataset.size());
    for (int s = 0; s < cfg.velocity_steps; ++s) {
        std::vector<VectorField> next(dataset.size());
        parallel_for(dataset.size(), [&](std::size_t n) {
            const VectorField g = metric.apply_K(grad_velocity(state, n, dataset, metric, shoot_cfg));
            next[n] = state.velocities[n];
            for (std::size_t i = 0; i < g.data.size(); ++i) next[n].data[i] -= lr_v * 0.5 * s2 * g.data[i];
        });
        state.velocities = std::move(next);
    }
    for (int s = 0; s < cfg.atlas_steps; ++s) {
        const ScalarVolume g = grad_atlas(state, dataset, metric, shoot_cfg);
        const double step = lr_a * s2 / (2.0 * n_subj);
        for (std::size_t i = 0; i < g.data.size(); ++i) state.atlas.data[i] -= step * g.data[i];
    }
    return atlas_energy(state, dataset, metric, shoot_cfg);
}

} // namespace

void refine_atlas(AtlasState &state, std::span<const ScalarVolume> dataset, const FluidMetric &metric,
                  const AtlasConfig &cfg, const ShootingConfig &shoot_cfg) {
    check_state(state, dataset, metric);
    if (!(cfg.lr_velocity > 0.0) || !(cfg.lr_atlas > 0.0)) throw ParameterError("atlas learning rates must be positive");
    if (cfg.outer_iters < 0 || cfg.velocity_steps < 0 || cfg.atlas_steps < 0)
        throw ParameterError("atlas iteration counts must be non-negative");
    state.reg_weight = cfg.reg_weight;
    if (state.energy_trace.empty()) state.energy_trace.push_back(atlas_energy(state, dataset, metric, shoot_cfg));

    double lr_v = cfg.lr_velocity, lr_a = cfg.lr_atlas;
    int rises = 0;
    for (int it = 0; it < cfg.outer_iters; ++it) {
        const ScalarVolume atlas_before = state.atlas;
        const std::vector<VectorField> velocities_before = state.velocities;
        double e;
        try {
            e = outer_step(state, dataset, metric, cfg, shoot_cfg, lr_v, lr_a);
        } catch (const DivergenceError &) {
            // Overshoot: undo the iteration and continue with smaller steps.
            state.atlas = atlas_before;
            state.velocities = velocities_before;
            lr_v *= 0.5;
            lr_a *= 0.5;
            rises = 0;
            state.energy_trace.push_back(state.energy_trace.back());
            continue;
        }
        if (e > state.energy_trace.back()) {
            if (++rises >= 2) {
                lr_v *= 0.5;
                lr_a *= 0.5;
                rises = 0;
            }
        } else {
            rises = 0;
        }
        state.energy_trace.push_back(e);
    }
}

AtlasState fit_atlas(std::span<const ScalarVolume> dataset, const FluidMetric &metric, const AtlasConfig &cfg,
                     const ShootingConfig &shoot_cfg) {
    AtlasState state = init_atlas_state(dataset, cfg.sigma, cfg.reg_weight);
    refine_atlas(state, dataset, metric, cfg, shoot_cfg);
    return state;
}

} // namespace sadir
