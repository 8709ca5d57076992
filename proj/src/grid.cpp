#include "sadir/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sadir/errors.hpp"

namespace sadir {

GridSpec::GridSpec(int nx, int ny, int nz, std::array<double, 3> h) : dims{nx, ny, nz}, spacing(h) { validate(); }

void GridSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) throw ParameterError("grid dimension " + std::to_string(a) + " must be >= 2");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw ParameterError("grid spacing " + std::to_string(a) + " must be positive");
    }
}

void require_same_grid(const GridSpec &a, const GridSpec &b, const char *what) {
    if (a.dims != b.dims || a.spacing != b.spacing) throw DimensionError(std::string("grid mismatch in ") + what);
}

ScalarVolume::ScalarVolume(const GridSpec &g, double fill) : grid(g), data(g.size(), fill) { g.validate(); }

bool ScalarVolume::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

VectorField::VectorField(const GridSpec &g, double fill) : grid(g), data(3 * g.size(), fill) { g.validate(); }

bool VectorField::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

namespace {

struct AxisCell {
    int i0;
    double f;
    bool inside; // false when the coordinate was clamped
};

inline AxisCell locate(double p, int n) {
    AxisCell c{};
    c.inside = true;
    if (!(p >= 0.0)) {
        p = 0.0;
        c.inside = false;
    } else if (p > n - 1) {
        p = n - 1;
        c.inside = false;
    }
    c.i0 = std::min(static_cast<int>(p), n - 2);
    c.f = p - c.i0;
    return c;
}

struct Corners {
    std::size_t base;
    std::size_t sx, sy, sz;
    AxisCell cx, cy, cz;
};

inline Corners corners(const GridSpec &g, const Point3 &p) {
    Corners k{};
    k.cx = locate(p[0], g.dims[0]);
    k.cy = locate(p[1], g.dims[1]);
    k.cz = locate(p[2], g.dims[2]);
    k.base = g.index(k.cx.i0, k.cy.i0, k.cz.i0);
    k.sx = 1;
    k.sy = g.stride(1);
    k.sz = g.stride(2);
    return k;
}

inline double lerp(double a, double b, double f) { return a * (1.0 - f) + b * f; }

} // namespace

double interpolate_at(const ScalarVolume &vol, const Point3 &p) {
    const auto k = corners(vol.grid, p);
    const double *d = vol.data.data() + k.base;
    const double c00 = lerp(d[0], d[k.sx], k.cx.f);
    const double c10 = lerp(d[k.sy], d[k.sy + k.sx], k.cx.f);
    const double c01 = lerp(d[k.sz], d[k.sz + k.sx], k.cx.f);
    const double c11 = lerp(d[k.sz + k.sy], d[k.sz + k.sy + k.sx], k.cx.f);
    return lerp(lerp(c00, c10, k.cy.f), lerp(c01, c11, k.cy.f), k.cz.f);
}

Point3 interpolate_gradient_at(const ScalarVolume &vol, const Point3 &p) {
    const auto k = corners(vol.grid, p);
    const double *d = vol.data.data() + k.base;
    const double v000 = d[0], v100 = d[k.sx], v010 = d[k.sy], v110 = d[k.sy + k.sx];
    const double v001 = d[k.sz], v101 = d[k.sz + k.sx], v011 = d[k.sz + k.sy], v111 = d[k.sz + k.sy + k.sx];
    const double fx = k.cx.f, fy = k.cy.f, fz = k.cz.f;
    Point3 g{0.0, 0.0, 0.0};
    if (k.cx.inside) {
        g[0] = lerp(lerp(v100 - v000, v110 - v010, fy), lerp(v101 - v001, v111 - v011, fy), fz);
    }
    if (k.cy.inside) {
        g[1] = lerp(lerp(v010 - v000, v110 - v100, fx), lerp(v011 - v001, v111 - v101, fx), fz);
    }
    if (k.cz.inside) {
        g[2] = lerp(lerp(v001 - v000, v101 - v100, fx), lerp(v011 - v010, v111 - v110, fx), fy);
    }
    return g;
}

std::vector<double> interpolate(const ScalarVolume &vol, std::span<const Point3> pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = interpolate_at(vol, pts[i]);
    return out;
}

ScalarVolume warp(const ScalarVolume &vol, const Transform &phi) {
    require_same_grid(vol.grid, phi.grid(), "warp");
    const auto &g = vol.grid;
    ScalarVolume out(g);
    const auto ux = phi.displacement.channel(0), uy = phi.displacement.channel(1), uz = phi.displacement.channel(2);
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x, ++i)
                out.data[i] = interpolate_at(vol, {x + ux[i], y + uy[i], z + uz[i]});
    return out;
}

WarpAdjoint warp_adjoint(const ScalarVolume &residual, const Transform &phi, const ScalarVolume &vol) {
    require_same_grid(residual.grid, phi.grid(), "warp_adjoint");
    require_same_grid(vol.grid, phi.grid(), "warp_adjoint");
    const auto &g = vol.grid;
    WarpAdjoint out{ScalarVolume(g), VectorField(g)};
    const auto ux = phi.displacement.channel(0), uy = phi.displacement.channel(1), uz = phi.displacement.channel(2);
    auto dx = out.d_u.channel(0), dy = out.d_u.channel(1), dz = out.d_u.channel(2);
    double *dv = out.d_vol.data.data();
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x, ++i) {
                const double r = residual.data[i];
                const Point3 p{x + ux[i], y + uy[i], z + uz[i]};
                const auto k = corners(g, p);
                const double fx = k.cx.f, fy = k.cy.f, fz = k.cz.f;
                const double wx0 = 1.0 - fx, wy0 = 1.0 - fy, wz0 = 1.0 - fz;
                double *d = dv + k.base;
                d[0] += r * wx0 * wy0 * wz0;
                d[k.sx] += r * fx * wy0 * wz0;
                d[k.sy] += r * wx0 * fy * wz0;
                d[k.sy + k.sx] += r * fx * fy * wz0;
                d[k.sz] += r * wx0 * wy0 * fz;
                d[k.sz + k.sx] += r * fx * wy0 * fz;
                d[k.sz + k.sy] += r * wx0 * fy * fz;
                d[k.sz + k.sy + k.sx] += r * fx * fy * fz;
                if (r != 0.0) {
                    const auto grad = interpolate_gradient_at(vol, p);
                    dx[i] = r * grad[0];
                    dy[i] = r * grad[1];
                    dz[i] = r * grad[2];
                }
            }
    return out;
}

void partial(std::span<const double> f, const GridSpec &g, int axis, double scale, std::span<double> out) {
    const std::size_t s = g.stride(axis);
    const int n = g.dims[axis];
    const double half = 0.5 * scale;
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x, ++i) {
                const int c = axis == 0 ? x : axis == 1 ? y : z;
                if (c == 0)
                    out[i] = scale * (f[i + s] - f[i]);
                else if (c == n - 1)
                    out[i] = scale * (f[i] - f[i - s]);
                else
                    out[i] = half * (f[i + s] - f[i - s]);
            }
}

void partial_transpose_add(std::span<const double> g_in, const GridSpec &g, int axis, double scale,
                           std::span<double> out) {
    const std::size_t s = g.stride(axis);
    const int n = g.dims[axis];
    const double half = 0.5 * scale;
    std::size_t i = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x, ++i) {
                const int c = axis == 0 ? x : axis == 1 ? y : z;
                const double v = g_in[i];
                if (c == 0) {
                    out[i + s] += scale * v;
                    out[i] -= scale * v;
                } else if (c == n - 1) {
                    out[i] += scale * v;
                    out[i - s] -= scale * v;
                } else {
                    out[i + s] += half * v;
                    out[i - s] -= half * v;
                }
            }
}

JacobianField jacobian(const VectorField &field) {
    const auto &g = field.grid;
    JacobianField out{g, std::vector<double>(9 * g.size())};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            partial(field.channel(a), g, b, 1.0 / g.spacing[b],
                    std::span<double>(out.data.data() + static_cast<std::size_t>(a * 3 + b) * g.size(), g.size()));
    return out;
}

ScalarVolume divergence(const VectorField &field) {
    const auto &g = field.grid;
    ScalarVolume out(g);
    std::vector<double> tmp(g.size());
    for (int a = 0; a < 3; ++a) {
        partial(field.channel(a), g, a, 1.0 / g.spacing[a], tmp);
        for (std::size_t i = 0; i < tmp.size(); ++i) out.data[i] += tmp[i];
    }
    return out;
}

ScalarVolume jacobian_determinant(const Transform &phi) {
    const auto &g = phi.grid();
    const std::size_t n = g.size();
    std::vector<double> d(9 * n);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            partial(phi.displacement.channel(a), g, b, 1.0,
                    std::span<double>(d.data() + static_cast<std::size_t>(a * 3 + b) * n, n));
    ScalarVolume det(g);
    for (std::size_t i = 0; i < n; ++i) {
        auto m = [&](int a, int b) { return d[static_cast<std::size_t>(a * 3 + b) * n + i] + (a == b ? 1.0 : 0.0); };
        det.data[i] = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                      m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    }
    return det;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace sadir
