#include "sadir/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "sadir/errors.hpp"

namespace sadir {

TemplateKind parse_template_kind(const std::string &s) {
    if (s == "two-lobe" || s == "two-lobe-bump") return TemplateKind::TwoLobe;
    if (s == "torus") return TemplateKind::Torus;
    if (s == "ellipsoid") return TemplateKind::Ellipsoid;
    throw ParameterError("unknown template kind '" + s + "' (expected two-lobe, torus or ellipsoid)");
}

std::string to_string(TemplateKind k) {
    switch (k) {
    case TemplateKind::TwoLobe: return "two-lobe";
    case TemplateKind::Torus: return "torus";
    case TemplateKind::Ellipsoid: return "ellipsoid";
    }
    return "?";
}

std::string to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string &s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ParameterError("unknown split '" + s + "'");
}

std::vector<Split> default_splits(std::size_t n) {
    const auto n_train = static_cast<std::size_t>(std::lround(0.70 * static_cast<double>(n)));
    const auto n_val = std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n))));
    std::vector<Split> out(n, Split::Test);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            out[i] = Split::Train;
        else if (i < n_train + n_val)
            out[i] = Split::Val;
    }
    return out;
}

namespace {

constexpr double kEdgeWidth = 0.5; // voxels

double soft(double signed_dist) { return 1.0 / (1.0 + std::exp(-signed_dist / kEdgeWidth)); }

// Approximate signed distance (positive inside) along the ray from the centre.
double ellipsoid_sd(double x, double y, double z, const std::array<double, 3> &c, const std::array<double, 3> &r) {
    const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
    const double rho = std::sqrt(dx * dx / (r[0] * r[0]) + dy * dy / (r[1] * r[1]) + dz * dz / (r[2] * r[2]));
    const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (rho < 1e-12) return std::min({r[0], r[1], r[2]});
    return len * (1.0 / rho - 1.0);
}

} // namespace

ScalarVolume make_template(TemplateKind kind, const GridSpec &grid) {
    ScalarVolume out(grid);
    const double nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    const double cx = 0.5 * (nx - 1), cy = 0.5 * (ny - 1), cz = 0.5 * (nz - 1);
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) {
                double sd = 0.0;
                switch (kind) {
                case TemplateKind::TwoLobe: {
                    const std::array<double, 3> r{0.14 * nx, 0.25 * ny, 0.22 * nz};
                    const double off = 0.18 * nx;
                    sd = std::max(ellipsoid_sd(x, y, z, {cx - off, cy, cz}, r),
                                  ellipsoid_sd(x, y, z, {cx + off, cy + 0.04 * ny, cz}, r));
                    break;
                }
                case TemplateKind::Torus: {
                    const double m = std::min(nx, ny);
                    const double major = 0.25 * m, minor = 0.13 * m;
                    const double ring = std::hypot(x - cx, y - cy) - major;
                    sd = minor - std::hypot(ring, (z - cz) * m / nz);
                    break;
                }
                case TemplateKind::Ellipsoid:
                    sd = ellipsoid_sd(x, y, z, {cx, cy, cz}, {0.30 * nx, 0.24 * ny, 0.20 * nz});
                    break;
                }
                out.at(x, y, z) = soft(sd);
            }
    return out;
}

VectorField random_smooth_velocity(const FluidMetric &metric, double scale, Rng &rng) {
    VectorField w = normal_field(rng, metric.grid());
    if (scale == 0.0) return VectorField(metric.grid());
    VectorField v = metric.apply_K(w);
    const std::size_t n = v.grid.size();
    for (int c = 0; c < 3; ++c) {
        auto ch = v.channel(c);
        double mean = 0.0;
        for (double x : ch) mean += x;
        mean /= static_cast<double>(n);
        for (auto &x : ch) x -= mean;
    }
    double max_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        max_norm = std::max(max_norm, std::sqrt(v.channel(0)[i] * v.channel(0)[i] + v.channel(1)[i] * v.channel(1)[i] +
                                                v.channel(2)[i] * v.channel(2)[i]));
    if (max_norm > 0.0)
        for (auto &x : v.data) x *= scale / max_norm;
    return v;
}

SyntheticDataset synth_dataset(TemplateKind kind, int n_subjects, const GridSpec &grid, double deform_scale,
                               const FluidMetric &metric, const ShootingConfig &shoot_cfg, std::uint64_t seed) {
    if (n_subjects < 1) throw ParameterError("synth_dataset needs at least one subject");
    if (!(deform_scale >= 0.0)) throw ParameterError("deform_scale must be non-negative");
    require_same_grid(grid, metric.grid(), "synth_dataset");
    SyntheticDataset ds;
    ds.kind = kind;
    ds.templ = make_template(kind, grid);
    const auto splits = default_splits(static_cast<std::size_t>(n_subjects));
    Rng rng(seed);
    ShootingConfig sc = shoot_cfg;
    sc.store_trajectory = false;
    for (int n = 0; n < n_subjects; ++n) {
        SyntheticSubject s;
        char id[32];
        std::snprintf(id, sizeof id, "subj_%03d", n);
        s.id = id;
        s.split = splits[static_cast<std::size_t>(n)];
        double scale = deform_scale;
        VectorField v = random_smooth_velocity(metric, scale, rng);
        while (true) {
            const auto traj = shoot(metric, v, sc);
            const auto det = jacobian_determinant(traj.transform);
            const bool ok = std::all_of(det.data.begin(), det.data.end(), [](double d) { return d > 0.0; });
            if (ok) {
                s.volume = warp(ds.templ, traj.transform);
                break;
            }
            const double reduced = scale * 0.8;
            std::clog << "synth: " << s.id << " folds at deform scale " << scale << ", retrying with " << reduced
                      << '\n';
            for (auto &x : v.data) x *= reduced / scale;
            scale = reduced;
        }
        s.v0 = std::move(v);
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

int parse_axis(const std::string &s) {
    if (s == "x" || s == "0") return 0;
    if (s == "y" || s == "1") return 1;
    if (s == "z" || s == "2") return 2;
    throw ParameterError("unknown axis '" + s + "' (expected x, y or z)");
}

std::vector<int> slice_indices(int dim, int count) {
    if (count < 1) throw ParameterError("slice count must be >= 1");
    if (count > dim)
        throw ParameterError("slice count " + std::to_string(count) + " exceeds axis size " + std::to_string(dim));
    std::vector<int> idx;
    for (int i = 0; i < count; ++i) {
        const long k = static_cast<long>(std::floor((i + 0.5) * dim / count));
        idx.push_back(static_cast<int>(std::clamp<long>(k, 0, dim - 1)));
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

namespace {

// The two in-plane axes, lower first.
std::array<int, 2> plane_axes(int axis) {
    return axis == 0 ? std::array<int, 2>{1, 2} : axis == 1 ? std::array<int, 2>{0, 2} : std::array<int, 2>{0, 1};
}

std::size_t voxel_of(const GridSpec &g, int axis, int plane, int a, int b) {
    std::array<int, 3> c{};
    const auto pa = plane_axes(axis);
    c[axis] = plane;
    c[pa[0]] = a;
    c[pa[1]] = b;
    return g.index(c[0], c[1], c[2]);
}

void check_axis(int axis) {
    if (axis < 0 || axis > 2) throw ParameterError("slice axis must be 0, 1 or 2");
}

} // namespace

SliceStack extract_slices(const ScalarVolume &vol, int axis, int count) {
    check_axis(axis);
    const auto &g = vol.grid;
    SliceStack s;
    s.axis = axis;
    s.source_grid = g;
    s.indices = slice_indices(g.dims[axis], count);
    const auto pa = plane_axes(axis);
    for (int k : s.indices) {
        std::vector<double> plane(static_cast<std::size_t>(g.dims[pa[0]]) * g.dims[pa[1]]);
        for (int b = 0; b < g.dims[pa[1]]; ++b)
            for (int a = 0; a < g.dims[pa[0]]; ++a)
                plane[a + static_cast<std::size_t>(g.dims[pa[0]]) * b] = vol.data[voxel_of(g, axis, k, a, b)];
        s.planes.push_back(std::move(plane));
    }
    return s;
}

EmbeddedSlices embed_slices(const SliceStack &stack, const GridSpec &grid) {
    check_axis(stack.axis);
    if (stack.source_grid.dims != grid.dims) throw DimensionError("slice stack does not match the target grid");
    if (stack.planes.size() != stack.indices.size()) throw DimensionError("slice stack plane/index count mismatch");
    EmbeddedSlices out{ScalarVolume(grid), ScalarVolume(grid)};
    const auto pa = plane_axes(stack.axis);
    const std::size_t plane_size = static_cast<std::size_t>(grid.dims[pa[0]]) * grid.dims[pa[1]];
    for (std::size_t p = 0; p < stack.indices.size(); ++p) {
        const int k = stack.indices[p];
        if (k < 0 || k >= grid.dims[stack.axis]) throw DimensionError("slice index out of bounds");
        if (stack.planes[p].size() != plane_size) throw DimensionError("slice plane has the wrong size");
        for (int b = 0; b < grid.dims[pa[1]]; ++b)
            for (int a = 0; a < grid.dims[pa[0]]; ++a) {
                const auto i = voxel_of(grid, stack.axis, k, a, b);
                out.slices_embedded.data[i] = stack.planes[p][a + static_cast<std::size_t>(grid.dims[pa[0]]) * b];
                out.slice_mask.data[i] = 1.0;
            }
    }
    return out;
}

SliceStack stack_from_embedded(const ScalarVolume &slices_embedded, const ScalarVolume &slice_mask) {
    require_same_grid(slices_embedded.grid, slice_mask.grid, "slice stack");
    const auto &g = slice_mask.grid;
    for (int axis : {2, 1, 0}) {
        const auto pa = plane_axes(axis);
        std::vector<int> full;
        bool consistent = true;
        for (int k = 0; k < g.dims[axis] && consistent; ++k) {
            std::size_t ones = 0, total = 0;
            for (int b = 0; b < g.dims[pa[1]]; ++b)
                for (int a = 0; a < g.dims[pa[0]]; ++a, ++total) ones += slice_mask.data[voxel_of(g, axis, k, a, b)] == 1.0;
            if (ones == total)
                full.push_back(k);
            else if (ones != 0)
                consistent = false;
        }
        if (!consistent || full.empty()) continue;
        SliceStack s;
        s.axis = axis;
        s.source_grid = g;
        s.indices = full;
        for (int k : full) {
            std::vector<double> plane(static_cast<std::size_t>(g.dims[pa[0]]) * g.dims[pa[1]]);
            for (int b = 0; b < g.dims[pa[1]]; ++b)
                for (int a = 0; a < g.dims[pa[0]]; ++a)
                    plane[a + static_cast<std::size_t>(g.dims[pa[0]]) * b] =
                        slices_embedded.data[voxel_of(g, axis, k, a, b)];
            s.planes.push_back(std::move(plane));
        }
        return s;
    }
    throw FormatError("slice mask is not a union of full planes along one axis");
}

ConditioningPack make_conditioning(const ScalarVolume &atlas, const SliceStack &stack) {
    auto emb = embed_slices(stack, atlas.grid);
    return ConditioningPack{atlas, std::move(emb.slices_embedded), std::move(emb.slice_mask)};
}

} // namespace sadir
