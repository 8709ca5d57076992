#pragma once

// Synthetic shape populations with known ground truth, and sparse-slice
// extraction/embedding.

#include <cstdint>
#include <string>
#include <vector>

#include "sadir/diffusion.hpp"
#include "sadir/geodesic.hpp"
#include "sadir/grid.hpp"
#include "sadir/metric.hpp"

namespace sadir {

enum class TemplateKind { TwoLobe, Torus, Ellipsoid };

TemplateKind parse_template_kind(const std::string &s);
std::string to_string(TemplateKind k);

// Smooth soft-edged shape in [0, 1], sized relative to the grid.
ScalarVolume make_template(TemplateKind kind, const GridSpec &grid);

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split parse_split(const std::string &s);

// Split labels for n subjects: round(0.7 n) train, round(0.15 n) val, rest test.
std::vector<Split> default_splits(std::size_t n);

struct SyntheticSubject {
    std::string id;
    ScalarVolume volume;
    VectorField v0;
    Split split = Split::Train;
};

struct SyntheticDataset {
    TemplateKind kind = TemplateKind::TwoLobe;
    ScalarVolume templ;
    std::vector<SyntheticSubject> subjects;
};

// Zero-mean K-filtered white noise rescaled so max_x |v(x)| = scale.
VectorField random_smooth_velocity(const FluidMetric &metric, double scale, Rng &rng);

// Each subject is the template warped by phi(v0) with v0 from
// random_smooth_velocity; scales that fold the grid are reduced and retried.
SyntheticDataset synth_dataset(TemplateKind kind, int n_subjects, const GridSpec &grid, double deform_scale,
                               const FluidMetric &metric, const ShootingConfig &shoot_cfg, std::uint64_t seed);

struct SliceStack {
    int axis = 2;
    std::vector<int> indices;
    std::vector<std::vector<double>> planes; // each over the two non-axis dims, lower axis fastest
    GridSpec source_grid;
};

// round((i + 0.5) * D / count), clipped and deduplicated.
std::vector<int> slice_indices(int dim, int count);

// Throws ParameterError when count < 1 or count > dims[axis].
SliceStack extract_slices(const ScalarVolume &vol, int axis = 2, int count = 8);

struct EmbeddedSlices {
    ScalarVolume slices_embedded;
    ScalarVolume slice_mask;
};

EmbeddedSlices embed_slices(const SliceStack &stack, const GridSpec &grid);

// Inverse of embed_slices: finds the axis whose full planes make up the mask.
// Ambiguous full masks resolve to z first.
SliceStack stack_from_embedded(const ScalarVolume &slices_embedded, const ScalarVolume &slice_mask);

ConditioningPack make_conditioning(const ScalarVolume &atlas, const SliceStack &stack);

int parse_axis(const std::string &s);

} // namespace sadir
