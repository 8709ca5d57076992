#include "sadir/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "sadir/errors.hpp"
#include "sadir/parallel.hpp"

namespace sadir {

namespace nn {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu_tanh(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_tanh_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

namespace {

// Padded layout: (nx+2)(ny+2)(nz+2), clamp-filled. An output voxel (x,y,z)
// lives at p = x + px (y + py z) and reads tap k at p + off[k], so each tap is
// a contiguous axpy over [0, span) with garbage at x >= nx.
struct PadGeom {
    int nx, ny, nz, px, py, pz;
    std::size_t padded, span;
    std::array<std::size_t, 27> off;
};

PadGeom pad_geom(const GridSpec &g) {
    PadGeom p{};
    p.nx = g.dims[0];
    p.ny = g.dims[1];
    p.nz = g.dims[2];
    p.px = p.nx + 2;
    p.py = p.ny + 2;
    p.pz = p.nz + 2;
    p.padded = static_cast<std::size_t>(p.px) * p.py * p.pz;
    p.span = static_cast<std::size_t>(p.nz - 1) * p.px * p.py + static_cast<std::size_t>(p.ny - 1) * p.px + p.nx;
    for (int kz = 0; kz < 3; ++kz)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
                p.off[kx + 3 * (ky + 3 * kz)] =
                    kx + static_cast<std::size_t>(p.px) * (ky + static_cast<std::size_t>(p.py) * kz);
    return p;
}

void pad_channel(const double *in, const PadGeom &p, double *out) {
    for (int z = 0; z < p.pz; ++z) {
        const int sz = std::clamp(z - 1, 0, p.nz - 1);
        for (int y = 0; y < p.py; ++y) {
            const int sy = std::clamp(y - 1, 0, p.ny - 1);
            const double *row = in + static_cast<std::size_t>(p.nx) * (sy + static_cast<std::size_t>(p.ny) * sz);
            double *o = out + static_cast<std::size_t>(p.px) * (y + static_cast<std::size_t>(p.py) * z);
            o[0] = row[0];
            std::copy(row, row + p.nx, o + 1);
            o[p.px - 1] = row[p.nx - 1];
        }
    }
}

void fold_channel(const double *d_pad, const PadGeom &p, double *d_in) {
    for (int z = 0; z < p.pz; ++z) {
        const int sz = std::clamp(z - 1, 0, p.nz - 1);
        for (int y = 0; y < p.py; ++y) {
            const int sy = std::clamp(y - 1, 0, p.ny - 1);
            double *row = d_in + static_cast<std::size_t>(p.nx) * (sy + static_cast<std::size_t>(p.ny) * sz);
            const double *o = d_pad + static_cast<std::size_t>(p.px) * (y + static_cast<std::size_t>(p.py) * z);
            row[0] += o[0];
            for (int x = 0; x < p.nx; ++x) row[x] += o[x + 1];
            row[p.nx - 1] += o[p.px - 1];
        }
    }
}

inline std::size_t valid_index(const PadGeom &p, int x, int y, int z) {
    return x + static_cast<std::size_t>(p.px) * (y + static_cast<std::size_t>(p.py) * z);
}

} // namespace

void conv3d_forward(std::span<const double> in, int cin, std::span<const double> w, std::span<const double> b,
                    int cout, const GridSpec &g, std::span<double> out) {
    const std::size_t n = g.size();
    const auto p = pad_geom(g);
    std::vector<double> pad(static_cast<std::size_t>(cin) * p.padded);
    for (int ci = 0; ci < cin; ++ci) pad_channel(in.data() + ci * n, p, pad.data() + ci * p.padded);

    parallel_for(static_cast<std::size_t>(cout), [&](std::size_t co) {
        std::vector<double> acc(p.span, b[co]);
        double *a = acc.data();
        for (int ci = 0; ci < cin; ++ci) {
            const double *src = pad.data() + ci * p.padded;
            const double *wk = w.data() + (co * cin + ci) * 27;
            for (int k = 0; k < 27; ++k) {
                const double wv = wk[k];
                const double *s = src + p.off[k];
                for (std::size_t i = 0; i < p.span; ++i) a[i] += wv * s[i];
            }
        }
        double *o = out.data() + co * n;
        for (int z = 0; z < p.nz; ++z)
            for (int y = 0; y < p.ny; ++y) {
                const double *row = a + valid_index(p, 0, y, z);
                std::copy(row, row + p.nx, o + static_cast<std::size_t>(p.nx) * (y + static_cast<std::size_t>(p.ny) * z));
            }
    });
}

void conv3d_backward(std::span<const double> in, int cin, std::span<const double> w, int cout, const GridSpec &g,
                     std::span<const double> d_out, std::span<double> d_in, std::span<double> d_w,
                     std::span<double> d_b) {
    const std::size_t n = g.size();
    const auto p = pad_geom(g);
    std::vector<double> pad(static_cast<std::size_t>(cin) * p.padded);
    for (int ci = 0; ci < cin; ++ci) pad_channel(in.data() + ci * n, p, pad.data() + ci * p.padded);

    // d_out in padded layout, zero in the garbage columns.
    std::vector<double> dop(static_cast<std::size_t>(cout) * p.span, 0.0);
    for (int co = 0; co < cout; ++co) {
        const double *src = d_out.data() + co * n;
        double *dst = dop.data() + co * p.span;
        double sum = 0.0;
        for (int z = 0; z < p.nz; ++z)
            for (int y = 0; y < p.ny; ++y) {
                const double *row = src + static_cast<std::size_t>(p.nx) * (y + static_cast<std::size_t>(p.ny) * z);
                std::copy(row, row + p.nx, dst + valid_index(p, 0, y, z));
                for (int x = 0; x < p.nx; ++x) sum += row[x];
            }
        d_b[co] += sum;
    }

    parallel_for(static_cast<std::size_t>(cout), [&](std::size_t co) {
        const double *dv = dop.data() + co * p.span;
        for (int ci = 0; ci < cin; ++ci) {
            const double *src = pad.data() + ci * p.padded;
            double *dwk = d_w.data() + (co * cin + ci) * 27;
            for (int k = 0; k < 27; ++k) {
                const double *s = src + p.off[k];
                double acc = 0.0;
                for (std::size_t i = 0; i < p.span; ++i) acc += dv[i] * s[i];
                dwk[k] += acc;
            }
        }
    });

    if (d_in.empty()) return;
    parallel_for(static_cast<std::size_t>(cin), [&](std::size_t ci) {
        std::vector<double> dpad(p.padded, 0.0);
        for (int co = 0; co < cout; ++co) {
            const double *dv = dop.data() + co * p.span;
            const double *wk = w.data() + (co * cin + ci) * 27;
            for (int k = 0; k < 27; ++k) {
                const double wv = wk[k];
                double *d = dpad.data() + p.off[k];
                for (std::size_t i = 0; i < p.span; ++i) d[i] += wv * dv[i];
            }
        }
        double *din = d_in.data() + ci * n;
        std::fill(din, din + n, 0.0);
        fold_channel(dpad.data(), p, din);
    });
}

void se_forward(std::span<const double> x, int channels, std::size_t n, std::span<const double> w1,
                std::span<const double> b1, std::span<const double> w2, std::span<const double> b2, int hidden,
                std::span<double> out, SeCache &cache) {
    cache.pooled.assign(channels, 0.0);
    for (int c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[c * n + i];
        cache.pooled[c] = s / static_cast<double>(n);
    }
    cache.z1.assign(hidden, 0.0);
    for (int j = 0; j < hidden; ++j) {
        double s = b1[j];
        for (int c = 0; c < channels; ++c) s += w1[j * channels + c] * cache.pooled[c];
        cache.z1[j] = s;
    }
    cache.gate.assign(channels, 0.0);
    for (int c = 0; c < channels; ++c) {
        double s = b2[c];
        for (int j = 0; j < hidden; ++j) s += w2[c * hidden + j] * std::max(cache.z1[j], 0.0);
        cache.gate[c] = 1.0 / (1.0 + std::exp(-s));
    }
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < n; ++i) out[c * n + i] = x[c * n + i] * cache.gate[c];
}

void se_backward(std::span<const double> x, int channels, std::size_t n, std::span<const double> w1,
                 std::span<const double> w2, int hidden, const SeCache &cache, std::span<const double> d_out,
                 std::span<double> d_x, std::span<double> d_w1, std::span<double> d_b1, std::span<double> d_w2,
                 std::span<double> d_b2) {
    std::vector<double> d_z3(channels);
    for (int c = 0; c < channels; ++c) {
        double dg = 0.0;
        for (std::size_t i = 0; i < n; ++i) dg += d_out[c * n + i] * x[c * n + i];
        const double g = cache.gate[c];
        d_z3[c] = dg * g * (1.0 - g);
    }
    std::vector<double> d_z1(hidden, 0.0);
    for (int c = 0; c < channels; ++c) {
        d_b2[c] += d_z3[c];
        for (int j = 0; j < hidden; ++j) {
            d_w2[c * hidden + j] += d_z3[c] * std::max(cache.z1[j], 0.0);
            d_z1[j] += w2[c * hidden + j] * d_z3[c];
        }
    }
    for (int j = 0; j < hidden; ++j)
        if (cache.z1[j] <= 0.0) d_z1[j] = 0.0;
    std::vector<double> d_pooled(channels, 0.0);
    for (int j = 0; j < hidden; ++j) {
        d_b1[j] += d_z1[j];
        for (int c = 0; c < channels; ++c) {
            d_w1[j * channels + c] += d_z1[j] * cache.pooled[c];
            d_pooled[c] += w1[j * channels + c] * d_z1[j];
        }
    }
    for (int c = 0; c < channels; ++c) {
        const double g = cache.gate[c];
        const double dp = d_pooled[c] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) d_x[c * n + i] = d_out[c * n + i] * g + dp;
    }
}

std::vector<double> time_embedding(int tau, int dim) {
    const int half = dim / 2;
    std::vector<double> e(dim, 0.0);
    for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * i / half);
        e[i] = std::sin(tau * f);
        e[half + i] = std::cos(tau * f);
    }
    return e;
}

} // namespace nn

namespace {

constexpr int kInputChannels = 6;

int se_hidden(const DenoiserConfig &c) { return std::max(1, c.channels / c.se_reduction); }

void validate_config(const DenoiserConfig &c) {
    if (c.channels < 1 || c.blocks < 0 || c.embed_dim < 2 || c.embed_dim % 2 != 0 || c.se_reduction < 1 ||
        !(c.latent_scale > 0.0) || !std::isfinite(c.latent_scale))
        throw ParameterError("invalid denoiser configuration");
}

// Tensor order is fixed; index helpers below depend on it.
std::vector<Tensor> layout(const DenoiserConfig &c) {
    const std::size_t C = c.channels, E = c.embed_dim, R = c.blocks, H = se_hidden(c);
    std::vector<Tensor> t;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        t.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
    };
    add("stem.w", {C, kInputChannels, 27});
    add("stem.b", {C});
    add("time.w1", {E, E});
    add("time.b1", {E});
    add("time.w2", {2 * C * R, E});
    add("time.b2", {2 * C * R});
    for (std::size_t r = 0; r < R; ++r) {
        const std::string p = "block" + std::to_string(r) + ".";
        add(p + "conv1.w", {C, C, 27});
        add(p + "conv1.b", {C});
        add(p + "conv2.w", {C, C, 27});
        add(p + "conv2.b", {C});
        add(p + "se.w1", {H, C});
        add(p + "se.b1", {H});
        add(p + "se.w2", {C, H});
        add(p + "se.b2", {C});
    }
    add("head.w", {3, C, 27});
    add("head.b", {3});
    return t;
}

enum : std::size_t { kStemW, kStemB, kTimeW1, kTimeB1, kTimeW2, kTimeB2, kBlock0 };
enum : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kSeW1, kSeB1, kSeW2, kSeB2, kPerBlock };
inline std::size_t block_tensor(std::size_t r, std::size_t which) { return kBlock0 + r * kPerBlock + which; }
inline std::size_t head_w(const DenoiserConfig &c) { return kBlock0 + c.blocks * kPerBlock; }
inline std::size_t head_b(const DenoiserConfig &c) { return head_w(c) + 1; }

} // namespace

void DenoiserParams::set_latent_scale(double scale) {
    DenoiserConfig c = config_;
    c.latent_scale = scale;
    validate_config(c);
    config_ = c;
}

DenoiserParams DenoiserParams::init(const DenoiserConfig &cfg, Rng &rng) {
    validate_config(cfg);
    DenoiserParams p;
    p.config_ = cfg;
    p.tensors_ = layout(cfg);
    const double C = cfg.channels, E = cfg.embed_dim, H = se_hidden(cfg);
    auto normal = [&](Tensor &t, double std) { fill_normal(rng, t.data, std); };
    normal(p.tensors_[kStemW], std::sqrt(2.0 / (kInputChannels * 27.0)));
    normal(p.tensors_[kTimeW1], 1.0 / std::sqrt(E));
    normal(p.tensors_[kTimeW2], 0.1 / std::sqrt(E));
    for (int r = 0; r < cfg.blocks; ++r) {
        normal(p.tensors_[block_tensor(r, kConv1W)], std::sqrt(2.0 / (C * 27.0)));
        normal(p.tensors_[block_tensor(r, kConv2W)], 0.5 / std::sqrt(C * 27.0));
        normal(p.tensors_[block_tensor(r, kSeW1)], 1.0 / std::sqrt(C));
        normal(p.tensors_[block_tensor(r, kSeW2)], 1.0 / std::sqrt(H));
    }
    return p;
}

DenoiserParams DenoiserParams::from_tensors(const DenoiserConfig &cfg, std::vector<Tensor> tensors) {
    validate_config(cfg);
    DenoiserParams p;
    p.config_ = cfg;
    p.tensors_ = layout(cfg);
    std::map<std::string, Tensor *> by_name;
    for (auto &t : tensors) by_name[t.name] = &t;
    if (by_name.size() != p.tensors_.size())
        throw FormatError("denoiser checkpoint has " + std::to_string(tensors.size()) + " tensors, expected " +
                          std::to_string(p.tensors_.size()));
    for (auto &t : p.tensors_) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) throw FormatError("denoiser checkpoint is missing tensor " + t.name);
        if (it->second->shape != t.shape) throw FormatError("denoiser checkpoint tensor " + t.name + " has wrong shape");
        t.data = std::move(it->second->data);
    }
    return p;
}

DenoiserParams DenoiserParams::zeros_like() const {
    DenoiserParams p;
    p.config_ = config_;
    p.tensors_ = layout(config_);
    return p;
}

Tensor &DenoiserParams::get(std::string_view name) {
    for (auto &t : tensors_)
        if (t.name == name) return t;
    throw ParameterError("no denoiser tensor named " + std::string(name));
}

const Tensor &DenoiserParams::get(std::string_view name) const {
    return const_cast<DenoiserParams *>(this)->get(name);
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto &t : tensors_) n += t.data.size();
    return n;
}

bool DenoiserParams::all_finite() const {
    for (const auto &t : tensors_)
        for (double v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

VectorField denoiser_forward(const DenoiserParams &params, const VectorField &y_tau, int tau,
                             const ConditioningPack &cond, DenoiserTape *tape) {
    require_same_grid(y_tau.grid, cond.atlas.grid, "denoiser input");
    require_same_grid(y_tau.grid, cond.slices_embedded.grid, "denoiser input");
    require_same_grid(y_tau.grid, cond.slice_mask.grid, "denoiser input");
    const auto &cfg = params.config();
    const auto &T = params.tensors();
    if (T.empty()) throw ParameterError("denoiser parameters are uninitialized");
    if (tau < 1) throw ParameterError("timestep must be >= 1, got " + std::to_string(tau));
    const GridSpec &g = y_tau.grid;
    const std::size_t n = g.size();
    const int C = cfg.channels, E = cfg.embed_dim, R = cfg.blocks, H = se_hidden(cfg);

    DenoiserTape local;
    DenoiserTape &tp = tape ? *tape : local;
    tp = DenoiserTape{};
    tp.grid = g;
    tp.tau = tau;
    tp.input.resize(kInputChannels * n);
    std::copy(y_tau.data.begin(), y_tau.data.end(), tp.input.begin());
    std::copy(cond.atlas.data.begin(), cond.atlas.data.end(), tp.input.begin() + 3 * n);
    std::copy(cond.slices_embedded.data.begin(), cond.slices_embedded.data.end(), tp.input.begin() + 4 * n);
    std::copy(cond.slice_mask.data.begin(), cond.slice_mask.data.end(), tp.input.begin() + 5 * n);

    tp.embed = nn::time_embedding(tau, E);
    tp.t_pre.assign(E, 0.0);
    tp.t_act.assign(E, 0.0);
    for (int i = 0; i < E; ++i) {
        double s = T[kTimeB1].data[i];
        for (int j = 0; j < E; ++j) s += T[kTimeW1].data[i * E + j] * tp.embed[j];
        tp.t_pre[i] = s;
        tp.t_act[i] = nn::elu(s);
    }
    tp.film.assign(2 * C * R, 0.0);
    for (int i = 0; i < 2 * C * R; ++i) {
        double s = T[kTimeB2].data[i];
        for (int j = 0; j < E; ++j) s += T[kTimeW2].data[i * E + j] * tp.t_act[j];
        tp.film[i] = s;
    }

    tp.h.assign(R + 1, std::vector<double>(C * n));
    nn::conv3d_forward(tp.input, kInputChannels, T[kStemW].data, T[kStemB].data, C, g, tp.h[0]);

    tp.blocks.resize(R);
    for (int r = 0; r < R; ++r) {
        auto &b = tp.blocks[r];
        b.a1.resize(C * n);
        b.a2.resize(C * n);
        b.a3.resize(C * n);
        b.a4.resize(C * n);
        nn::conv3d_forward(tp.h[r], C, T[block_tensor(r, kConv1W)].data, T[block_tensor(r, kConv1B)].data, C, g, b.a1);
        for (std::size_t i = 0; i < b.a1.size(); ++i) b.a2[i] = nn::elu(b.a1[i]);
        for (int c = 0; c < C; ++c) {
            const double scale = 1.0 + tp.film[r * 2 * C + c];
            const double shift = tp.film[r * 2 * C + C + c];
            for (std::size_t i = 0; i < n; ++i) b.a3[c * n + i] = b.a2[c * n + i] * scale + shift;
        }
        nn::conv3d_forward(b.a3, C, T[block_tensor(r, kConv2W)].data, T[block_tensor(r, kConv2B)].data, C, g, b.a4);
        std::vector<double> gated(C * n);
        nn::SeCache cache;
        nn::se_forward(b.a4, C, n, T[block_tensor(r, kSeW1)].data, T[block_tensor(r, kSeB1)].data,
                       T[block_tensor(r, kSeW2)].data, T[block_tensor(r, kSeB2)].data, H, gated, cache);
        b.pooled = std::move(cache.pooled);
        b.z1 = std::move(cache.z1);
        b.gate = std::move(cache.gate);
        for (std::size_t i = 0; i < gated.size(); ++i) tp.h[r + 1][i] = tp.h[r][i] + gated[i];
    }

    tp.head_in.resize(C * n);
    for (std::size_t i = 0; i < tp.head_in.size(); ++i) tp.head_in[i] = nn::gelu_tanh(tp.h[R][i]);
    VectorField out(g);
    nn::conv3d_forward(tp.head_in, C, T[head_w(cfg)].data, T[head_b(cfg)].data, 3, g, out.data);
    tp.recorded = tape != nullptr;
    return out;
}

DenoiserGrads denoiser_backward(const DenoiserParams &params, const DenoiserTape &tape, const VectorField &d_eps_hat) {
    if (!tape.recorded) throw UsageError("denoiser_backward needs a tape from a recording forward pass");
    require_same_grid(d_eps_hat.grid, tape.grid, "denoiser_backward");
    const auto &cfg = params.config();
    const auto &T = params.tensors();
    const GridSpec &g = tape.grid;
    const std::size_t n = g.size();
    const int C = cfg.channels, E = cfg.embed_dim, R = cfg.blocks, H = se_hidden(cfg);

    DenoiserGrads out{params.zeros_like(), VectorField(g)};
    auto &G = out.params.tensors();

    std::vector<double> d_h(C * n);
    nn::conv3d_backward(tape.head_in, C, T[head_w(cfg)].data, 3, g, d_eps_hat.data, d_h, G[head_w(cfg)].data,
                        G[head_b(cfg)].data);
    for (std::size_t i = 0; i < d_h.size(); ++i) d_h[i] *= nn::gelu_tanh_grad(tape.h[R][i]);

    std::vector<double> d_film(2 * C * R, 0.0);
    std::vector<double> d_a4(C * n), d_a3(C * n), d_a1(C * n), d_hr(C * n);
    for (int r = R - 1; r >= 0; --r) {
        const auto &b = tape.blocks[r];
        nn::SeCache cache{b.pooled, b.z1, b.gate};
        nn::se_backward(b.a4, C, n, T[block_tensor(r, kSeW1)].data, T[block_tensor(r, kSeW2)].data, H, cache, d_h,
                        d_a4, G[block_tensor(r, kSeW1)].data, G[block_tensor(r, kSeB1)].data,
                        G[block_tensor(r, kSeW2)].data, G[block_tensor(r, kSeB2)].data);
        nn::conv3d_backward(b.a3, C, T[block_tensor(r, kConv2W)].data, C, g, d_a4, d_a3,
                            G[block_tensor(r, kConv2W)].data, G[block_tensor(r, kConv2B)].data);
        for (int c = 0; c < C; ++c) {
            const double scale = 1.0 + tape.film[r * 2 * C + c];
            double ds = 0.0, dsh = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = c * n + i;
                ds += d_a3[k] * b.a2[k];
                dsh += d_a3[k];
                d_a1[k] = d_a3[k] * scale * nn::elu_grad(b.a1[k]);
            }
            d_film[r * 2 * C + c] += ds;
            d_film[r * 2 * C + C + c] += dsh;
        }
        nn::conv3d_backward(tape.h[r], C, T[block_tensor(r, kConv1W)].data, C, g, d_a1, d_hr,
                            G[block_tensor(r, kConv1W)].data, G[block_tensor(r, kConv1B)].data);
        for (std::size_t i = 0; i < d_h.size(); ++i) d_h[i] += d_hr[i];
    }

    std::vector<double> d_input(kInputChannels * n);
    nn::conv3d_backward(tape.input, kInputChannels, T[kStemW].data, C, g, d_h, d_input, G[kStemW].data,
                        G[kStemB].data);
    std::copy(d_input.begin(), d_input.begin() + 3 * n, out.d_y_tau.data.begin());

    std::vector<double> d_tact(E, 0.0);
    for (int i = 0; i < 2 * C * R; ++i) {
        G[kTimeB2].data[i] += d_film[i];
        for (int j = 0; j < E; ++j) {
            G[kTimeW2].data[i * E + j] += d_film[i] * tape.t_act[j];
            d_tact[j] += T[kTimeW2].data[i * E + j] * d_film[i];
        }
    }
    for (int i = 0; i < E; ++i) {
        const double d = d_tact[i] * nn::elu_grad(tape.t_pre[i]);
        G[kTimeB1].data[i] += d;
        for (int j = 0; j < E; ++j) G[kTimeW1].data[i * E + j] += d * tape.embed[j];
    }
    return out;
}

EpsPredictor as_predictor(const DenoiserParams &params) {
    return [&params](const VectorField &y, int tau, const ConditioningPack &cond) {
        return denoiser_forward(params, y, tau, cond);
    };
}

void sgd_step(DenoiserParams &params, const DenoiserParams &grads, double lr, double weight_decay) {
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    auto &P = params.tensors();
    const auto &G = grads.tensors();
    if (P.size() != G.size()) throw DimensionError("sgd_step: parameter/gradient layout mismatch");
    for (std::size_t t = 0; t < P.size(); ++t)
        for (std::size_t i = 0; i < P[t].data.size(); ++i)
            P[t].data[i] -= lr * (G[t].data[i] + weight_decay * P[t].data[i]);
}

AdamOptimizer::AdamOptimizer(const DenoiserParams &like, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto &t : like.tensors()) {
        m_.emplace_back(t.data.size(), 0.0);
        v_.emplace_back(t.data.size(), 0.0);
    }
}

void AdamOptimizer::step(DenoiserParams &params, const DenoiserParams &grads, double lr, double weight_decay) {
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    auto &P = params.tensors();
    const auto &G = grads.tensors();
    if (P.size() != m_.size() || G.size() != m_.size()) throw DimensionError("adam: parameter layout mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t t = 0; t < P.size(); ++t) {
        auto &p = P[t].data;
        const auto &gr = G[t].data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = gr[i] + weight_decay * p[i];
            m_[t][i] = beta1_ * m_[t][i] + (1.0 - beta1_) * gi;
            v_[t][i] = beta2_ * v_[t][i] + (1.0 - beta2_) * gi * gi;
            p[i] -= lr * (m_[t][i] / c1) / (std::sqrt(v_[t][i] / c2) + eps_);
        }
    }
}

double cosine_lr(double base_lr, long step, long total_steps, double min_lr) {
    if (total_steps <= 0) return base_lr;
    const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

} // namespace sadir
