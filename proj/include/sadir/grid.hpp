#pragma once

// Regular 3D grids, scalar/vector fields on them, trilinear resampling and
// finite-difference operators.
//
// Storage is x-fastest: index = x + nx * (y + ny * z). Vector fields are
// channel-major, i.e. three consecutive scalar blocks.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sadir {

struct GridSpec {
    std::array<int, 3> dims{2, 2, 2};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    GridSpec() = default;
    GridSpec(int nx, int ny, int nz, std::array<double, 3> h = {1.0, 1.0, 1.0});

    static GridSpec cube(int n) { return GridSpec(n, n, n); }

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
    std::size_t stride(int axis) const {
        return axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(dims[0])
                                         : static_cast<std::size_t>(dims[0]) * dims[1];
    }
    double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

    // Throws ParameterError when dims < 2 or spacing <= 0.
    void validate() const;

    bool operator==(const GridSpec &o) const = default;
};

// Throws DimensionError naming `what` when the grids differ.
void require_same_grid(const GridSpec &a, const GridSpec &b, const char *what);

struct ScalarVolume {
    GridSpec grid;
    std::vector<double> data;

    ScalarVolume() = default;
    explicit ScalarVolume(const GridSpec &g, double fill = 0.0);

    double &at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
    bool all_finite() const;
};

struct VectorField {
    GridSpec grid;
    std::vector<double> data; // 3 * grid.size(), channel-major

    VectorField() = default;
    explicit VectorField(const GridSpec &g, double fill = 0.0);

    std::span<double> channel(int c) {
        return {data.data() + static_cast<std::size_t>(c) * grid.size(), grid.size()};
    }
    std::span<const double> channel(int c) const {
        return {data.data() + static_cast<std::size_t>(c) * grid.size(), grid.size()};
    }
    bool all_finite() const;
};

// phi(x) = x + u(x), with u in voxel units.
struct Transform {
    VectorField displacement;

    Transform() = default;
    explicit Transform(VectorField u) : displacement(std::move(u)) {}
    static Transform identity(const GridSpec &g) { return Transform(VectorField(g)); }

    const GridSpec &grid() const { return displacement.grid; }
};

// Nine channels, channel (a * 3 + b) holds d v_a / d x_b.
struct JacobianField {
    GridSpec grid;
    std::vector<double> data;

    std::span<const double> channel(int a, int b) const {
        return {data.data() + static_cast<std::size_t>(a * 3 + b) * grid.size(), grid.size()};
    }
};

using Point3 = std::array<double, 3>;

// Trilinear interpolation in voxel coordinates with clamp-to-edge.
double interpolate_at(const ScalarVolume &vol, const Point3 &p);
std::vector<double> interpolate(const ScalarVolume &vol, std::span<const Point3> pts);

// out(x) = vol(x + u(x)).
ScalarVolume warp(const ScalarVolume &vol, const Transform &phi);

struct WarpAdjoint {
    ScalarVolume d_vol; // splatted residual
    VectorField d_u;    // residual(x) * grad vol at phi(x)
};

// Transpose of the linearization of warp() with respect to vol and u.
WarpAdjoint warp_adjoint(const ScalarVolume &residual, const Transform &phi, const ScalarVolume &vol);

// Derivative of the trilinear interpolant at p with respect to p (zero along
// clamped axes).
Point3 interpolate_gradient_at(const ScalarVolume &vol, const Point3 &p);

// out = scale * d f / d axis; central differences in the interior, one-sided
// at the two boundary planes.
void partial(std::span<const double> f, const GridSpec &g, int axis, double scale, std::span<double> out);

// out += scale * D_axis^T g, the exact transpose of partial().
void partial_transpose_add(std::span<const double> g_in, const GridSpec &g, int axis, double scale,
                           std::span<double> out);

// Both use the grid spacing.
JacobianField jacobian(const VectorField &field);
ScalarVolume divergence(const VectorField &field);

// det(I + Du) per voxel, index-space derivatives.
ScalarVolume jacobian_determinant(const Transform &phi);

double dot(std::span<const double> a, std::span<const double> b);

} // namespace sadir
