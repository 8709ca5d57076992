#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "sadir/diffusion.hpp"
#include "sadir/grid.hpp"
#include "sadir/metric.hpp"

namespace testutil {

using sadir::GridSpec;
using sadir::Rng;
using sadir::ScalarVolume;
using sadir::VectorField;

inline ScalarVolume random_volume(const GridSpec &g, Rng &rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ScalarVolume v(g);
    for (auto &x : v.data) x = u(rng);
    return v;
}

inline VectorField random_field(const GridSpec &g, Rng &rng, double amp = 1.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    VectorField v(g);
    for (auto &x : v.data) x = u(rng);
    return v;
}

// K-filtered noise rescaled to the requested max magnitude.
inline VectorField smooth_field(const sadir::FluidMetric &m, Rng &rng, double max_abs) {
    VectorField v = m.apply_K(sadir::normal_field(rng, m.grid()));
    double mx = 0.0;
    for (double x : v.data) mx = std::max(mx, std::abs(x));
    for (auto &x : v.data) x *= max_abs / mx;
    return v;
}

inline double max_abs(const std::vector<double> &a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Axis-aligned box of ones on [lo, hi) per axis.
inline ScalarVolume box(const GridSpec &g, std::array<int, 3> lo, std::array<int, 3> hi) {
    ScalarVolume v(g);
    for (int z = lo[2]; z < hi[2]; ++z)
        for (int y = lo[1]; y < hi[1]; ++y)
            for (int x = lo[0]; x < hi[0]; ++x) v.at(x, y, z) = 1.0;
    return v;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string &name) {
    auto p = std::filesystem::temp_directory_path() / ("sadir_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace testutil
