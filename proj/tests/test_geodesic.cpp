#include "doctest.h"

#include <string>

#include "helpers.hpp"
#include "sadir/errors.hpp"
#include "sadir/geodesic.hpp"

using namespace sadir;
using namespace testutil;

namespace {

double fd_partial(std::span<const double> f, const GridSpec &g, int b, int x, int y, int z) {
    int c[3] = {x, y, z};
    const int n = g.dims[b];
    auto val = [&](int k) {
        int q[3] = {c[0], c[1], c[2]};
        q[b] = k;
        return f[g.index(q[0], q[1], q[2])];
    };
    const double h = g.spacing[b];
    if (c[b] == 0) return (val(1) - val(0)) / h;
    if (c[b] == n - 1) return (val(n - 1) - val(n - 2)) / h;
    return (val(c[b] + 1) - val(c[b] - 1)) / (2 * h);
}

// Term-by-term: -K[(Dv)^T m + (Dm) v + m div v].
VectorField oracle_rhs(const FluidMetric &metric, const VectorField &v) {
    const auto &g = v.grid;
    VectorField m = metric.apply_L(v);
    VectorField br(g);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                const std::size_t i = g.index(x, y, z);
                double div = 0.0;
                for (int b = 0; b < 3; ++b) div += fd_partial(v.channel(b), g, b, x, y, z);
                for (int a = 0; a < 3; ++a) {
                    double t1 = 0.0, t2 = 0.0;
                    for (int b = 0; b < 3; ++b) {
                        t1 += fd_partial(v.channel(b), g, a, x, y, z) * m.channel(b)[i];
                        t2 += fd_partial(m.channel(a), g, b, x, y, z) * v.channel(b)[i];
                    }
                    br.channel(a)[i] = t1 + t2 + m.channel(a)[i] * div;
                }
            }
    VectorField out = metric.apply_K(br);
    for (auto &x : out.data) x = -x;
    return out;
}

VectorField axpy(const VectorField &a, double s, const VectorField &b) {
    VectorField out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += s * b.data[i];
    return out;
}

} // namespace

TEST_SUITE("geodesic") {

TEST_CASE("epdiff rhs: zero and constant fields") {
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    CHECK(max_abs(epdiff_rhs(m, VectorField(g)).data) == 0.0);
    VectorField c(g, 0.4);
    CHECK(max_abs(epdiff_rhs(m, c).data) < 1e-12);
}

TEST_CASE("epdiff rhs matches a term-by-term evaluation") {
    Rng rng(1);
    GridSpec g(8, 8, 8, {1.0, 1.0, 1.5});
    auto m = build_metric(g);
    auto v = random_field(g, rng, 0.5);
    auto got = epdiff_rhs(m, v);
    auto want = oracle_rhs(m, v);
    CHECK(max_abs_diff(got.data, want.data) < 1e-11 * std::max(1.0, max_abs(want.data)));
}

TEST_CASE("epdiff rhs vjp is the transpose of its linearization") {
    Rng rng(2);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g, 1.0, 1.0, 1);
    auto v = random_field(g, rng, 0.3);
    auto w = random_field(g, rng);
    auto d = random_field(g, rng);
    auto vjp = epdiff_rhs_vjp(m, v, w);
    // The rhs is quadratic in v, so the central difference is exact.
    const double h = 1e-3;
    const double fp = dot(epdiff_rhs(m, axpy(v, h, d)).data, w.data);
    const double fm = dot(epdiff_rhs(m, axpy(v, -h, d)).data, w.data);
    CHECK(rel_err(dot(vjp.data, d.data), (fp - fm) / (2 * h)) < 1e-8);
}

TEST_CASE("zero initial velocity gives the identity") {
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto traj = shoot(m, VectorField(g));
    CHECK(traj.velocities.size() == 11);
    CHECK(traj.displacements.size() == 11);
    for (const auto &v : traj.velocities) CHECK(max_abs(v.data) == 0.0);
    CHECK(max_abs(traj.transform.displacement.data) == 0.0);
}

TEST_CASE("trajectory layout") {
    Rng rng(3);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto v0 = smooth_field(m, rng, 0.3);
    CHECK(ShootingConfig{}.steps == 10);
    auto traj = shoot(m, v0, {4, false});
    CHECK(traj.velocities.size() == 5);
    CHECK(traj.displacements.empty());
    CHECK(traj.velocities.front().data == v0.data);
    CHECK_THROWS_AS(shoot(m, v0, {0, true}), ParameterError);
    CHECK_THROWS_AS(shoot_vjp(m, traj, v0), ParameterError);
    CHECK_THROWS_AS(shoot(m, VectorField(GridSpec::cube(6))), DimensionError);
}

TEST_CASE("divergence is reported with the step") {
    auto g = GridSpec::cube(8);
    auto m = build_metric(g, 0.01, 1.0, 1);
    Rng rng(4);
    auto v0 = random_field(g, rng, 1e200);
    try {
        shoot(m, v0);
        FAIL("expected divergence");
    } catch (const DivergenceError &e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("single-step adjoint is minus the cotangent") {
    Rng rng(5);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto v0 = random_field(g, rng, 0.5);
    auto d_phi = random_field(g, rng);
    // One Euler step from u = 0: u(1) = -v0.
    auto traj = shoot(m, v0, {1, true});
    for (std::size_t i = 0; i < v0.data.size(); ++i) CHECK(traj.transform.displacement.data[i] == -v0.data[i]);
    auto d = shoot_vjp(m, v0, {1, true}, d_phi);
    for (std::size_t i = 0; i < d.data.size(); ++i) CHECK(d.data[i] == -d_phi.data[i]);
}

TEST_CASE("adjoint is linear and vanishes on a zero cotangent") {
    Rng rng(6);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto v0 = smooth_field(m, rng, 0.5);
    CHECK(max_abs(shoot_vjp(m, v0, {}, VectorField(g)).data) == 0.0);
    auto a = random_field(g, rng), b = random_field(g, rng);
    auto ga = shoot_vjp(m, v0, {}, a), gb = shoot_vjp(m, v0, {}, b);
    auto gab = shoot_vjp(m, v0, {}, axpy(a, 2.0, b));
    for (std::size_t i = 0; i < gab.data.size(); ++i)
        CHECK(gab.data[i] == doctest::Approx(ga.data[i] + 2.0 * gb.data[i]).scale(1.0).epsilon(1e-10));
}

TEST_CASE("shoot_vjp matches central finite differences") {
    Rng rng(7);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto v0 = smooth_field(m, rng, 0.8);
    auto d_phi = random_field(g, rng);
    auto grad = shoot_vjp(m, v0, {}, d_phi);
    auto scalar = [&](const VectorField &v) { return dot(shoot(m, v, {10, false}).transform.displacement.data, d_phi.data); };
    for (int probe = 0; probe < 10; ++probe) {
        auto d = random_field(g, rng);
        const double h = 1e-4;
        const double fd = (scalar(axpy(v0, h, d)) - scalar(axpy(v0, -h, d))) / (2 * h);
        CHECK(rel_err(dot(grad.data, d.data), fd) < 1e-4);
    }
}

TEST_CASE("metric norm drift along the geodesic is small") {
    Rng rng(8);
    auto g = GridSpec::cube(16);
    auto m = build_metric(g);
    // Drift comes mostly from the one-sided boundary stencils and grows quickly
    // with amplitude; 0.25 voxel keeps it under 5%.
    for (int k = 0; k < 10; ++k) {
        auto v0 = smooth_field(m, rng, 0.25);
        auto traj = shoot(m, v0);
        const double n0 = velocity_norm(m, v0);
        double worst = 0.0;
        for (const auto &v : traj.velocities) worst = std::max(worst, std::abs(velocity_norm(m, v) - n0) / n0);
        CHECK(worst < 0.05);
    }
}

TEST_CASE("small velocities give positive Jacobian determinants") {
    Rng rng(9);
    auto g = GridSpec::cube(16);
    auto m = build_metric(g);
    for (int t = 0; t < 5; ++t) {
        auto v0 = smooth_field(m, rng, 0.5);
        auto det = jacobian_determinant(shoot(m, v0, {10, false}).transform);
        for (double d : det.data) CHECK(d > 0.0);
    }
}

}
