#include "sadir/geodesic.hpp"

#include <string>

#include "sadir/errors.hpp"

namespace sadir {

namespace {

struct Derivs {
    std::vector<double> d; // 9 * n, (a * 3 + b) = scale_b * d f_a / d x_b
    std::size_t n;
    double at(int a, int b, std::size_t i) const { return d[static_cast<std::size_t>(a * 3 + b) * n + i]; }
};

Derivs derivs(const VectorField &f, bool use_spacing) {
    const auto &g = f.grid;
    Derivs out{std::vector<double>(9 * g.size()), g.size()};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            partial(f.channel(a), g, b, use_spacing ? 1.0 / g.spacing[b] : 1.0,
                    std::span<double>(out.d.data() + static_cast<std::size_t>(a * 3 + b) * out.n, out.n));
    return out;
}

// u - delta * (Du . v + v), index-space derivatives.
void transport_step(const VectorField &u, const VectorField &v, double delta, VectorField &out) {
    const auto du = derivs(u, false);
    const std::size_t n = u.grid.size();
    for (int a = 0; a < 3; ++a) {
        auto o = out.channel(a);
        const auto ua = u.channel(a), va = v.channel(a);
        for (std::size_t i = 0; i < n; ++i) {
            double s = va[i];
            for (int b = 0; b < 3; ++b) s += du.at(a, b, i) * v.channel(b)[i];
            o[i] = ua[i] - delta * s;
        }
    }
}

void check_finite(const VectorField &f, int step, const char *what) {
    if (!f.all_finite())
        throw DivergenceError(std::string("geodesic shooting diverged: non-finite ") + what + " at step " +
                              std::to_string(step));
}

} // namespace

VectorField epdiff_rhs(const FluidMetric &metric, const VectorField &v) {
    require_same_grid(v.grid, metric.grid(), "epdiff_rhs");
    const std::size_t n = v.grid.size();
    const VectorField m = metric.apply_L(v);
    const auto dv = derivs(v, true);
    const auto dm = derivs(m, true);
    VectorField bracket(v.grid);
    for (std::size_t i = 0; i < n; ++i) {
        const double div = dv.at(0, 0, i) + dv.at(1, 1, i) + dv.at(2, 2, i);
        for (int a = 0; a < 3; ++a) {
            double s = m.channel(a)[i] * div;
            for (int b = 0; b < 3; ++b) s += dv.at(b, a, i) * m.channel(b)[i] + dm.at(a, b, i) * v.channel(b)[i];
            bracket.channel(a)[i] = s;
        }
    }
    VectorField out = metric.apply_K(bracket);
    for (auto &x : out.data) x = -x;
    return out;
}

VectorField epdiff_rhs_vjp(const FluidMetric &metric, const VectorField &v, const VectorField &g) {
    require_same_grid(v.grid, metric.grid(), "epdiff_rhs_vjp");
    require_same_grid(g.grid, metric.grid(), "epdiff_rhs_vjp");
    const auto &grid = v.grid;
    const std::size_t n = grid.size();
    const VectorField m = metric.apply_L(v);
    const auto dv = derivs(v, true);
    const auto dm = derivs(m, true);

    // Cotangent of the bracket term.
    VectorField h = metric.apply_K(g);
    for (auto &x : h.data) x = -x;

    VectorField grad_v(grid);
    VectorField grad_m(grid);
    std::vector<double> tmp(n);
    std::vector<double> hm(n, 0.0);
    for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < n; ++i) hm[i] += h.channel(a)[i] * m.channel(a)[i];

    for (int b = 0; b < 3; ++b) {
        const double sb = 1.0 / grid.spacing[b];
        auto gvb = grad_v.channel(b);
        auto gmb = grad_m.channel(b);
        // (Dv)^T m, d/dv part; (Dm) v, d/dv part
        for (int a = 0; a < 3; ++a) {
            const double sa = 1.0 / grid.spacing[a];
            const auto ha = h.channel(a);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = ha[i] * m.channel(b)[i];
            partial_transpose_add(tmp, grid, a, sa, gvb);
            for (std::size_t i = 0; i < n; ++i) gvb[i] += ha[i] * dm.at(a, b, i);
            // (Dv)^T m, d/dm part
            for (std::size_t i = 0; i < n; ++i) gmb[i] += ha[i] * dv.at(b, a, i);
            // (Dm) v, d/dm part
            for (std::size_t i = 0; i < n; ++i) tmp[i] = h.channel(b)[i] * v.channel(a)[i];
            partial_transpose_add(tmp, grid, a, sa, gmb);
        }
        // m div v
        partial_transpose_add(hm, grid, b, sb, gvb);
        for (std::size_t i = 0; i < n; ++i)
            gmb[i] += h.channel(b)[i] * (dv.at(0, 0, i) + dv.at(1, 1, i) + dv.at(2, 2, i));
    }
    const VectorField lm = metric.apply_L(grad_m);
    for (std::size_t i = 0; i < grad_v.data.size(); ++i) grad_v.data[i] += lm.data[i];
    return grad_v;
}

GeodesicTrajectory shoot(const FluidMetric &metric, const VectorField &v0, const ShootingConfig &cfg) {
    require_same_grid(v0.grid, metric.grid(), "shoot");
    if (cfg.steps < 1) throw ParameterError("shooting steps must be >= 1");
    check_finite(v0, 0, "initial velocity");
    const double delta = 1.0 / cfg.steps;

    GeodesicTrajectory traj;
    traj.velocities.reserve(cfg.steps + 1);
    traj.velocities.push_back(v0);
    VectorField u(v0.grid);
    if (cfg.store_trajectory) {
        traj.displacements.reserve(cfg.steps + 1);
        traj.displacements.push_back(u);
    }
    VectorField next_u(v0.grid);
    for (int s = 0; s < cfg.steps; ++s) {
        const VectorField &v = traj.velocities.back();
        transport_step(u, v, delta, next_u);
        std::swap(u, next_u);
        check_finite(u, s + 1, "displacement");
        VectorField rhs = epdiff_rhs(metric, v);
        for (std::size_t i = 0; i < rhs.data.size(); ++i) rhs.data[i] = v.data[i] + delta * rhs.data[i];
        check_finite(rhs, s + 1, "velocity");
        traj.velocities.push_back(std::move(rhs));
        if (cfg.store_trajectory) traj.displacements.push_back(u);
    }
    traj.transform = Transform(std::move(u));
    return traj;
}

VectorField shoot_vjp(const FluidMetric &metric, const GeodesicTrajectory &traj, const VectorField &d_phi) {
    const int steps = static_cast<int>(traj.velocities.size()) - 1;
    if (steps < 1 || static_cast<int>(traj.displacements.size()) != steps + 1)
        throw ParameterError("shoot_vjp needs a trajectory recorded with store_trajectory");
    const auto &grid = traj.velocities.front().grid;
    require_same_grid(d_phi.grid, grid, "shoot_vjp");
    const std::size_t n = grid.size();
    const double delta = 1.0 / steps;

    VectorField gu = d_phi;
    VectorField gv(grid);
    bool gv_zero = true;
    std::vector<double> tmp(n);
    for (int s = steps - 1; s >= 0; --s) {
        const VectorField &v = traj.velocities[s];
        const VectorField &u = traj.displacements[s];
        VectorField next_gv = gv;
        if (!gv_zero) {
            const VectorField f = epdiff_rhs_vjp(metric, v, gv);
            for (std::size_t i = 0; i < f.data.size(); ++i) next_gv.data[i] += delta * f.data[i];
        }
        // u_{s+1} = u_s - delta * (Du_s . v_s + v_s)
        const auto du = derivs(u, false);
        VectorField next_gu = gu;
        for (int b = 0; b < 3; ++b) {
            auto gvb = next_gv.channel(b);
            for (std::size_t i = 0; i < n; ++i) {
                double s_ = gu.channel(b)[i];
                for (int a = 0; a < 3; ++a) s_ += gu.channel(a)[i] * du.at(a, b, i);
                gvb[i] -= delta * s_;
            }
        }
        for (int a = 0; a < 3; ++a) {
            auto gua = next_gu.channel(a);
            for (int b = 0; b < 3; ++b) {
                for (std::size_t i = 0; i < n; ++i) tmp[i] = gu.channel(a)[i] * v.channel(b)[i];
                partial_transpose_add(tmp, grid, b, -delta, gua);
            }
        }
        gu = std::move(next_gu);
        gv = std::move(next_gv);
        gv_zero = false;
    }
    return gv;
}

VectorField shoot_vjp(const FluidMetric &metric, const VectorField &v0, const ShootingConfig &cfg,
                      const VectorField &d_phi) {
    ShootingConfig c = cfg;
    c.store_trajectory = true;
    return shoot_vjp(metric, shoot(metric, v0, c), d_phi);
}

} // namespace sadir
