#pragma once

// Overlap and surface-distance metrics on binarized volumes, plus error maps.

#include <string>
#include <vector>

#include "sadir/grid.hpp"

namespace sadir {

struct MetricRecord {
    double dsc = 0.0;
    double jaccard = 0.0;
    double rhd95 = 0.0;
    double mse = 0.0;
};

// Dice on voxels >= threshold; 0/0 -> 1.
double hard_dice(const ScalarVolume &a, const ScalarVolume &b, double threshold = 0.5);
// |A & B| / |A | B|; 0/0 -> 1.
double jaccard(const ScalarVolume &a, const ScalarVolume &b, double threshold = 0.5);

// Boundary voxels: foreground with a 6-neighbour that is background or
// outside the grid.
std::vector<std::size_t> boundary_voxels(const ScalarVolume &v, double threshold = 0.5);

// 95th percentile (linear interpolation between order statistics) of the
// pooled directed boundary-to-boundary distances, in world units.
// Throws UndefinedMetricError when either foreground is empty.
double rhd95(const ScalarVolume &a, const ScalarVolume &b, double threshold = 0.5);

// Euclidean distance (world units) from each voxel to the nearest voxel in
// `sites`; separable exact transform.
std::vector<double> distance_to_sites(const GridSpec &g, const std::vector<std::size_t> &sites);

// Linear-interpolated percentile, q in [0, 1]. Sorts `values`.
double percentile(std::vector<double> values, double q);

ScalarVolume error_map(const ScalarVolume &y_hat, const ScalarVolume &y);

// Mean squared voxel difference.
double compute_mse(const ScalarVolume &y_hat, const ScalarVolume &y);

MetricRecord compute_metrics(const ScalarVolume &y_hat, const ScalarVolume &y, double threshold = 0.5);

} // namespace sadir
