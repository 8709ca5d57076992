#include "sadir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sadir/errors.hpp"

namespace sadir {

namespace {

struct Counts {
    std::size_t a = 0, b = 0, both = 0;
};

Counts count(const ScalarVolume &a, const ScalarVolume &b, double threshold) {
    require_same_grid(a.grid, b.grid, "overlap metric");
    Counts c;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool fa = a.data[i] >= threshold, fb = b.data[i] >= threshold;
        c.a += fa;
        c.b += fb;
        c.both += fa && fb;
    }
    return c;
}

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher) with
// sample spacing h; reads f with `stride`, writes n contiguous values.
void edt_1d(const double *f, std::size_t n, std::size_t stride, double h, double *out, std::vector<int> &v,
            std::vector<double> &z, std::vector<double> &buf) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    buf.resize(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = f[i * stride];
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = -1;
    for (int q = 0; q < static_cast<int>(n); ++q) {
        if (buf[q] == inf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        const double pq = q * h;
        double s;
        while (true) {
            const double pv = v[k] * h;
            s = ((buf[q] + pq * pq) - (buf[v[k]] + pv * pv)) / (2.0 * (pq - pv));
            if (s <= z[k]) // z[0] = -inf stops this at k = 0
                --k;
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = inf;
        return;
    }
    int j = 0;
    for (int q = 0; q < static_cast<int>(n); ++q) {
        while (z[j + 1] < q * h) ++j;
        const double d = (q - v[j]) * h;
        out[q] = d * d + buf[v[j]];
    }
}

} // namespace

double hard_dice(const ScalarVolume &a, const ScalarVolume &b, double threshold) {
    const auto c = count(a, b, threshold);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double jaccard(const ScalarVolume &a, const ScalarVolume &b, double threshold) {
    const auto c = count(a, b, threshold);
    const std::size_t uni = c.a + c.b - c.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(uni);
}

std::vector<std::size_t> boundary_voxels(const ScalarVolume &v, double threshold) {
    const auto &g = v.grid;
    std::vector<std::size_t> out;
    auto fg = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= g.dims[0] || y >= g.dims[1] || z >= g.dims[2]) return false;
        return v.at(x, y, z) >= threshold;
    };
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!fg(x, y, z)) continue;
                if (!fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                    !fg(x, y, z - 1) || !fg(x, y, z + 1))
                    out.push_back(g.index(x, y, z));
            }
    return out;
}

std::vector<double> distance_to_sites(const GridSpec &g, const std::vector<std::size_t> &sites) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> d(g.size(), inf);
    for (auto s : sites) d[s] = 0.0;
    std::vector<int> v;
    std::vector<double> z, buf;
    std::vector<double> tmp;
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t stride = g.stride(axis);
        const std::size_t n = static_cast<std::size_t>(g.dims[axis]);
        tmp.resize(n);
        for (int zz = 0; zz < g.dims[2]; ++zz)
            for (int yy = 0; yy < g.dims[1]; ++yy)
                for (int xx = 0; xx < g.dims[0]; ++xx) {
                    const int c = axis == 0 ? xx : axis == 1 ? yy : zz;
                    if (c != 0) continue;
                    const std::size_t start = g.index(xx, yy, zz);
                    edt_1d(d.data() + start, n, stride, g.spacing[axis], tmp.data(), v, z, buf);
                    for (std::size_t i = 0; i < n; ++i) d[start + i * stride] = tmp[i];
                }
    }
    for (auto &x : d) x = std::sqrt(x);
    return d;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw UndefinedMetricError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * f;
}

double rhd95(const ScalarVolume &a, const ScalarVolume &b, double threshold) {
    require_same_grid(a.grid, b.grid, "rhd95");
    const auto sa = boundary_voxels(a, threshold);
    const auto sb = boundary_voxels(b, threshold);
    if (sa.empty() || sb.empty()) throw UndefinedMetricError("rhd95 is undefined for an empty foreground");
    const auto da = distance_to_sites(a.grid, sa);
    const auto db = distance_to_sites(b.grid, sb);
    std::vector<double> pooled;
    pooled.reserve(sa.size() + sb.size());
    for (auto i : sa) pooled.push_back(db[i]);
    for (auto i : sb) pooled.push_back(da[i]);
    return percentile(std::move(pooled), 0.95);
}

ScalarVolume error_map(const ScalarVolume &y_hat, const ScalarVolume &y) {
    require_same_grid(y_hat.grid, y.grid, "error_map");
    ScalarVolume out(y.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::abs(y_hat.data[i] - y.data[i]);
    return out;
}

double compute_mse(const ScalarVolume &y_hat, const ScalarVolume &y) {
    require_same_grid(y_hat.grid, y.grid, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const double d = y_hat.data[i] - y.data[i];
        s += d * d;
    }
    return s / static_cast<double>(y.data.size());
}

MetricRecord compute_metrics(const ScalarVolume &y_hat, const ScalarVolume &y, double threshold) {
    MetricRecord r;
    r.dsc = hard_dice(y_hat, y, threshold);
    r.jaccard = jaccard(y_hat, y, threshold);
    r.rhd95 = rhd95(y_hat, y, threshold);
    r.mse = compute_mse(y_hat, y);
    return r;
}

} // namespace sadir
