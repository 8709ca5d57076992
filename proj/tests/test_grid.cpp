#include "doctest.h"

#include "helpers.hpp"
#include "sadir/errors.hpp"
#include "sadir/grid.hpp"

using namespace sadir;
using namespace testutil;

TEST_SUITE("grid") {

TEST_CASE("grid spec validation and indexing") {
    CHECK_THROWS_AS(GridSpec(1, 4, 4).validate(), ParameterError);
    CHECK_THROWS_AS(GridSpec(4, 4, 4, {1.0, 0.0, 1.0}).validate(), ParameterError);
    GridSpec g(3, 4, 5);
    CHECK(g.size() == 60);
    CHECK(g.index(1, 2, 3) == 1 + 3 * (2 + 4 * 3));
    CHECK(g.stride(2) == 12);
    CHECK_THROWS_AS(require_same_grid(g, GridSpec(3, 4, 6), "x"), DimensionError);
}

TEST_CASE("interpolation at centres, midpoints and outside the grid") {
    Rng rng(1);
    auto g = GridSpec::cube(6);
    auto vol = random_volume(g, rng);
    CHECK(interpolate_at(vol, {2, 3, 4}) == vol.at(2, 3, 4));
    CHECK(interpolate_at(vol, {-5, -5, -5}) == vol.at(0, 0, 0));
    CHECK(interpolate_at(vol, {40, 40, 40}) == vol.at(5, 5, 5));

    ScalarVolume ramp(g);
    ramp.at(2, 1, 1) = 0.0;
    ramp.at(3, 1, 1) = 1.0;
    CHECK(interpolate_at(ramp, {2.5, 1, 1}) == doctest::Approx(0.5));
    // Linear along an axis between two centres.
    for (double t : {0.1, 0.37, 0.9}) {
        const double want = (1 - t) * vol.at(1, 2, 3) + t * vol.at(1, 3, 3);
        CHECK(interpolate_at(vol, {1, 2 + t, 3}) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("warp by the identity is bitwise") {
    Rng rng(2);
    auto g = GridSpec(7, 6, 5);
    auto vol = random_volume(g, rng);
    auto out = warp(vol, Transform::identity(g));
    CHECK(out.data == vol.data);
}

TEST_CASE("warp of a constant stays constant") {
    Rng rng(3);
    auto g = GridSpec::cube(8);
    ScalarVolume c(g, 0.75);
    Transform phi(random_field(g, rng, 3.0));
    for (double x : warp(c, phi).data) CHECK(x == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("unit x displacement shifts the index by one") {
    Rng rng(4);
    auto g = GridSpec::cube(8);
    auto vol = random_volume(g, rng);
    VectorField u(g);
    for (auto &x : u.channel(0)) x = 1.0;
    auto out = warp(vol, Transform(u));
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 7; ++x) CHECK(out.at(x, y, z) == vol.at(x + 1, y, z));
}

TEST_CASE("warp adjoint: identity and constant volume cases") {
    Rng rng(5);
    auto g = GridSpec::cube(6);
    auto r = random_volume(g, rng, -1, 1);
    auto vol = random_volume(g, rng);
    auto adj = warp_adjoint(r, Transform::identity(g), vol);
    CHECK(adj.d_vol.data == r.data);

    Transform phi(random_field(g, rng, 1.5));
    auto adj2 = warp_adjoint(r, phi, ScalarVolume(g, 2.0));
    CHECK(max_abs(adj2.d_u.data) == 0.0);
}

TEST_CASE("warp adjoint passes the dot-product test") {
    for (std::uint64_t seed : {6u, 7u, 8u}) {
        Rng rng(seed);
        auto g = GridSpec::cube(8);
        auto vol = random_volume(g, rng);
        Transform phi(random_field(g, rng, 1.3));
        auto r = random_volume(g, rng, -1, 1);
        auto dvol = random_volume(g, rng, -1, 1);
        auto du = random_field(g, rng);

        // Linearization: warp(dvol, phi) + grad(vol)(phi(x)) . du(x), evaluated
        // independently of warp_adjoint.
        auto lin = warp(dvol, phi);
        std::size_t i = 0;
        for (int z = 0; z < 8; ++z)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x, ++i) {
                    Point3 p{x + phi.displacement.channel(0)[i], y + phi.displacement.channel(1)[i],
                             z + phi.displacement.channel(2)[i]};
                    auto gr = interpolate_gradient_at(vol, p);
                    for (int c = 0; c < 3; ++c) lin.data[i] += gr[c] * du.channel(c)[i];
                }
        auto adj = warp_adjoint(r, phi, vol);
        const double lhs = dot(lin.data, r.data);
        const double rhs = dot(dvol.data, adj.d_vol.data) + dot(du.data, adj.d_u.data);
        CHECK(rel_err(lhs, rhs) < 1e-10);
    }
}

TEST_CASE("interpolate_gradient_at matches central differences off the lattice") {
    Rng rng(9);
    auto g = GridSpec::cube(6);
    auto vol = random_volume(g, rng);
    const Point3 p{2.3, 1.6, 3.45};
    auto gr = interpolate_gradient_at(vol, p);
    for (int c = 0; c < 3; ++c) {
        Point3 a = p, b = p;
        a[c] += 1e-6;
        b[c] -= 1e-6;
        CHECK(gr[c] == doctest::Approx((interpolate_at(vol, a) - interpolate_at(vol, b)) / 2e-6).epsilon(1e-7));
    }
    // Clamped axis: zero derivative.
    CHECK(interpolate_gradient_at(vol, {-1.0, 2.2, 2.2})[0] == 0.0);
}

namespace {

// Independent difference loop: central inside, one-sided at the two faces.
double oracle_partial(const VectorField &f, int a, int b, int x, int y, int z) {
    const auto &g = f.grid;
    int c[3] = {x, y, z};
    const int n = g.dims[b];
    auto val = [&](int k) {
        int q[3] = {c[0], c[1], c[2]};
        q[b] = k;
        return f.channel(a)[g.index(q[0], q[1], q[2])];
    };
    const double h = g.spacing[b];
    if (c[b] == 0) return (val(1) - val(0)) / h;
    if (c[b] == n - 1) return (val(n - 1) - val(n - 2)) / h;
    return (val(c[b] + 1) - val(c[b] - 1)) / (2 * h);
}

} // namespace

TEST_CASE("jacobian matches an independent difference loop") {
    Rng rng(10);
    GridSpec g(8, 7, 6, {1.0, 0.5, 2.0});
    auto f = random_field(g, rng);
    auto J = jacobian(f);
    double worst = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int z = 0; z < 6; ++z)
                for (int y = 0; y < 7; ++y)
                    for (int x = 0; x < 8; ++x)
                        worst = std::max(worst, std::abs(J.channel(a, b)[g.index(x, y, z)] -
                                                         oracle_partial(f, a, b, x, y, z)));
    CHECK(worst < 1e-14);

    auto div = divergence(f);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(div.data[i] == doctest::Approx(J.channel(0, 0)[i] + J.channel(1, 1)[i] + J.channel(2, 2)[i]));
}

TEST_CASE("jacobian and divergence are exact on affine fields") {
    auto g = GridSpec::cube(7);
    const double A[3][3] = {{0.3, -1.2, 0.5}, {2.0, 0.1, -0.7}, {0.0, 0.9, 1.4}};
    VectorField f(g), c(g, 4.2);
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x)
                for (int a = 0; a < 3; ++a)
                    f.channel(a)[g.index(x, y, z)] = A[a][0] * x + A[a][1] * y + A[a][2] * z + 1.0;
    auto J = jacobian(f);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (std::size_t i = 0; i < g.size(); ++i) CHECK(J.channel(a, b)[i] == doctest::Approx(A[a][b]));
    CHECK(max_abs(jacobian(c).data) == 0.0);
    CHECK(max_abs(divergence(c).data) == 0.0);

    VectorField id(g);
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x) {
                id.channel(0)[g.index(x, y, z)] = x;
                id.channel(1)[g.index(x, y, z)] = y;
                id.channel(2)[g.index(x, y, z)] = z;
            }
    for (double d : divergence(id).data) CHECK(d == doctest::Approx(3.0));
}

TEST_CASE("partial_transpose_add is the transpose of partial") {
    Rng rng(11);
    GridSpec g(5, 6, 7, {1.0, 2.0, 0.5});
    auto f = random_volume(g, rng, -1, 1);
    auto r = random_volume(g, rng, -1, 1);
    for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> df(g.size()), dtr(g.size(), 0.0);
        partial(f.data, g, axis, 1.7, df);
        partial_transpose_add(r.data, g, axis, 1.7, dtr);
        CHECK(rel_err(dot(df, r.data), dot(f.data, dtr)) < 1e-12);
    }
}

TEST_CASE("jacobian determinant") {
    auto g = GridSpec::cube(6);
    for (double d : jacobian_determinant(Transform::identity(g)).data) CHECK(d == 1.0);
    VectorField u(g);
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) u.channel(0)[g.index(x, y, z)] = 0.5 * x;
    for (double d : jacobian_determinant(Transform(u)).data) CHECK(d == doctest::Approx(1.5));
}

TEST_CASE("mismatched grids are rejected") {
    auto g = GridSpec::cube(4);
    ScalarVolume a(g);
    Transform phi = Transform::identity(GridSpec::cube(5));
    CHECK_THROWS_AS(warp(a, phi), DimensionError);
    CHECK_THROWS_AS(warp_adjoint(a, phi, a), DimensionError);
}

}
