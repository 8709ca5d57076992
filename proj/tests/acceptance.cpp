// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Run a subset with: sadir_acceptance 1 4 9

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sadir/atlas.hpp"
#include "sadir/cli.hpp"
#include "sadir/config.hpp"
#include "sadir/denoiser.hpp"
#include "sadir/diffusion.hpp"
#include "sadir/geodesic.hpp"
#include "sadir/io.hpp"
#include "sadir/metrics.hpp"
#include "sadir/pipeline.hpp"
#include "sadir/synth.hpp"

using namespace sadir;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char *f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

void note(Outcome &o, bool ok, const std::string &what) {
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += what + (ok ? "" : " [x]");
}

VectorField axpy(const VectorField &a, double h, const VectorField &d) {
    VectorField r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += h * d.data[i];
    return r;
}

// 1 ---------------------------------------------------------------------------
Outcome operator_identity() {
    Outcome o;
    const auto t0 = clk::now();
    Rng rng(101);
    double worst = 0.0;
    for (int n : {8, 12, 16, 24, 32}) {
        auto m = build_metric(GridSpec::cube(n));
        for (int k = 0; k < 2; ++k) {
            auto v = random_field(m.grid(), rng);
            auto back = m.apply_K(m.apply_L(v));
            worst = std::max(worst, max_abs_diff(back.data, v.data) / max_abs(v.data));
        }
    }
    const double t = seconds_since(t0);
    note(o, worst < 1e-10, fmt("max rel err %.2e over 8^3..32^3", worst));
    note(o, t < 1.0, fmt("%.2f s", t));
    return o;
}

// 2 ---------------------------------------------------------------------------
Outcome shooting_gradients() {
    Outcome o;
    const auto t0 = clk::now();
    Rng rng(202);
    auto m = build_metric(GridSpec::cube(8));
    const ShootingConfig sc{};
    double worst = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        auto v0 = smooth_field(m, rng, 0.5);
        auto cot = random_field(m.grid(), rng);
        // Probe along smooth directions, the tangent space the metric lives on.
        auto d = smooth_field(m, rng, 1.0);
        auto scalar = [&](const VectorField &v) { return dot(shoot(m, v, sc).transform.displacement.data, cot.data); };
        const double h = 1e-4;
        const double fd = (scalar(axpy(v0, h, d)) - scalar(axpy(v0, -h, d))) / (2 * h);
        const double an = dot(shoot_vjp(m, v0, sc, cot).data, d.data);
        worst = std::max(worst, rel_err(an, fd));
    }
    const double t = seconds_since(t0);
    note(o, worst < 1e-4, fmt("max rel err %.2e over 10 probes", worst));
    note(o, t < 30.0, fmt("%.2f s", t));
    return o;
}

// 3 ---------------------------------------------------------------------------
Outcome atlas_gradients() {
    Outcome o;
    Rng rng(303);
    auto g = GridSpec::cube(8);
    auto m = build_metric(g);
    auto templ = make_template(TemplateKind::TwoLobe, g);
    std::vector<ScalarVolume> ds;
    for (int i = 0; i < 3; ++i) ds.push_back(warp(templ, shoot(m, smooth_field(m, rng, 0.7), {10, false}).transform));
    auto st = init_atlas_state(ds, 0.1, 0.05);
    for (auto &v : st.velocities) v = smooth_field(m, rng, 0.4);
    const ShootingConfig sc{};

    // Piecewise-linear interpolation: keep the stencil well inside one cell.
    const double h = 1e-6;
    double worst_v = 0.0, worst_a = 0.0;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        auto gv = grad_velocity(st, n, ds, m, sc);
        for (int probe = 0; probe < 4; ++probe) {
            auto d = random_field(g, rng);
            auto sp = st, sm = st;
            sp.velocities[n] = axpy(st.velocities[n], h, d);
            sm.velocities[n] = axpy(st.velocities[n], -h, d);
            const double fd = (atlas_energy(sp, ds, m, sc) - atlas_energy(sm, ds, m, sc)) / (2 * h);
            worst_v = std::max(worst_v, rel_err(dot(gv.data, d.data), fd));
        }
    }
    auto ga = grad_atlas(st, ds, m, sc);
    for (int probe = 0; probe < 10; ++probe) {
        auto d = random_volume(g, rng, -1, 1);
        auto sp = st, sm = st;
        for (std::size_t i = 0; i < d.data.size(); ++i) {
            sp.atlas.data[i] += 1e-4 * d.data[i];
            sm.atlas.data[i] -= 1e-4 * d.data[i];
        }
        const double fd = (atlas_energy(sp, ds, m, sc) - atlas_energy(sm, ds, m, sc)) / 2e-4;
        worst_a = std::max(worst_a, rel_err(dot(ga.data, d.data), fd));
    }
    note(o, worst_v < 1e-4, fmt("grad_velocity rel err %.2e", worst_v));
    note(o, worst_a < 1e-4, fmt("grad_atlas rel err %.2e", worst_a));

    // Identity warps: one exact atlas step from anywhere lands on the voxelwise mean.
    std::vector<ScalarVolume> rs{random_volume(g, rng), random_volume(g, rng), random_volume(g, rng),
                                 random_volume(g, rng)};
    AtlasState id;
    id.atlas = random_volume(g, rng);
    id.velocities.assign(rs.size(), VectorField(g));
    id.sigma = 0.02;
    AtlasConfig one;
    one.outer_iters = 1;
    one.lr_velocity = 1e-300;
    one.lr_atlas = 1.0;
    refine_atlas(id, rs, m, one, sc);
    double mean_err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double mean = 0.0;
        for (const auto &y : rs) mean += y.data[i];
        mean /= static_cast<double>(rs.size());
        mean_err = std::max(mean_err, std::abs(id.atlas.data[i] - mean));
    }
    const auto init = init_atlas_state(rs);
    double init_err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        init_err = std::max(init_err, std::abs(init.atlas.data[i] - (rs[0].data[i] + rs[1].data[i] + rs[2].data[i] +
                                                                      rs[3].data[i]) / 4.0));
    note(o, mean_err < 1e-12 && init_err < 1e-15, fmt("identity-warp optimum vs mean %.1e", std::max(mean_err, init_err)));
    return o;
}

// 4 ---------------------------------------------------------------------------
Outcome epdiff_conservation() {
    Outcome o;
    Rng rng(404);
    auto m = build_metric(GridSpec::cube(16));
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        auto v0 = smooth_field(m, rng, 0.25);
        auto traj = shoot(m, v0, {10, true});
        const double n0 = velocity_norm(m, v0);
        for (const auto &v : traj.velocities) worst = std::max(worst, std::abs(velocity_norm(m, v) - n0) / n0);
    }
    note(o, worst < 0.05, fmt("max drift %.2f%% over 10 fields (max component 0.25 voxel, 16^3, 10 steps)", 100 * worst));
    return o;
}

// 5 ---------------------------------------------------------------------------
Outcome diffusion_identities() {
    Outcome o;
    Rng rng(505);
    auto g = GridSpec::cube(8);
    auto s10 = default_schedule(10);
    auto y0 = random_field(g, rng);
    double rt = 0.0;
    for (int t = 1; t <= 10; ++t) {
        auto eps = normal_field(rng, g);
        rt = std::max(rt, max_abs_diff(predict_x0(s10, forward_sample(s10, y0, t, eps), t, eps).data, y0.data));
    }
    note(o, rt < 1e-12, fmt("predict_x0 round trip %.1e", rt));

    // Iterated single steps vs the closed form, per-voxel moments over 10,000 draws.
    const auto g1 = GridSpec::cube(2);
    const int draws = 10000, tau = 7;
    const double y0v = 0.6;
    VectorField start(g1, y0v);
    std::vector<double> closed, iter;
    for (int k = 0; k < draws; ++k) {
        closed.push_back(forward_sample(s10, start, tau, normal_field(rng, g1)).data[0]);
        VectorField y = start;
        for (int t = 1; t <= tau; ++t) y = forward_step(s10, y, t, normal_field(rng, g1));
        iter.push_back(y.data[0]);
    }
    const double mu = std::sqrt(s10.alpha_bar_at(tau)) * y0v, sd = std::sqrt(1.0 - s10.alpha_bar_at(tau));
    double worst_z = 0.0;
    for (const auto *x : {&closed, &iter}) {
        double m = 0.0, v = 0.0;
        for (double e : *x) m += e;
        m /= draws;
        for (double e : *x) v += (e - m) * (e - m);
        const double s = std::sqrt(v / (draws - 1));
        worst_z = std::max({worst_z, std::abs(m - mu) / (sd / std::sqrt(draws)),
                            std::abs(s - sd) / (sd / std::sqrt(2.0 * draws))});
    }
    note(o, worst_z < 4.0, fmt("moments within %.2f standard errors", worst_z));

    auto s50 = default_schedule(50);
    auto target = random_field(g, rng, 0.3);
    EpsPredictor oracle = [&](const VectorField &y, int t, const ConditioningPack &) {
        VectorField e(y.grid);
        const double a = std::sqrt(s50.alpha_bar_at(t)), b = std::sqrt(1.0 - s50.alpha_bar_at(t));
        for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = (y.data[i] - a * target.data[i]) / b;
        return e;
    };
    ConditioningPack cond{ScalarVolume(g), ScalarVolume(g), ScalarVolume(g)};
    VectorField y = normal_field(rng, g, 0.1);
    for (int t = s50.T; t >= 1; --t) y = reverse_step(s50, y, t, oracle(y, t, cond), VectorField(g));
    const double chain = max_abs_diff(y.data, target.data) / max_abs(target.data);
    note(o, chain < 1e-6, fmt("oracle reverse chain rel err %.1e", chain));
    return o;
}

// 6 ---------------------------------------------------------------------------
Outcome denoiser_gradients() {
    Outcome o;
    Rng rng(606);
    auto g = GridSpec::cube(8);
    auto p = DenoiserParams::init({4, 2, 8, 2}, rng);
    // Live head and biases; keep excitation hidden units active.
    for (auto &t : p.tensors()) {
        if (t.name.find(".b") != std::string::npos || t.name.rfind("head", 0) == 0) fill_normal(rng, t.data, 0.2);
        if (t.name.find("se.b1") != std::string::npos)
            for (auto &x : t.data) x = 0.5 + std::abs(x);
    }
    auto y = random_field(g, rng, 0.5);
    ConditioningPack c{random_volume(g, rng), random_volume(g, rng), ScalarVolume(g)};
    for (int z = 1; z < 8; z += 2)
        for (int yy = 0; yy < 8; ++yy)
            for (int x = 0; x < 8; ++x) c.slice_mask.at(x, yy, z) = 1.0;
    auto w = random_field(g, rng);
    const int tau = 13;
    DenoiserTape tape;
    denoiser_forward(p, y, tau, c, &tape);
    auto gr = denoiser_backward(p, tape, w);
    auto loss = [&](const DenoiserParams &q) { return dot(denoiser_forward(q, y, tau, c).data, w.data); };

    const double h = 1e-5;
    double worst = 0.0;
    std::string worst_name;
    std::uniform_int_distribution<std::size_t> pick;
    for (std::size_t ti = 0; ti < p.tensors().size(); ++ti) {
        const auto &gt = gr.params.tensors()[ti].data;
        const double scale = max_abs(gt);
        for (int k = 0; k < 5; ++k) {
            const std::size_t j = pick(rng) % gt.size();
            auto qp = p, qm = p;
            qp.tensors()[ti].data[j] += h;
            qm.tensors()[ti].data[j] -= h;
            const double fd = (loss(qp) - loss(qm)) / (2 * h);
            const double err = std::abs(fd - gt[j]) / std::max({std::abs(fd), std::abs(gt[j]), 1e-6 * scale, 1e-300});
            if (err > worst) {
                worst = err;
                worst_name = p.tensors()[ti].name;
            }
        }
    }
    note(o, worst < 1e-3,
         "max rel err " + fmt("%.2e", worst) + " (" + worst_name + ") over " + std::to_string(p.tensors().size()) +
             " tensors");
    return o;
}

// 7 ---------------------------------------------------------------------------
struct P3 {
    int x, y, z;
};

std::vector<P3> surface_of(const ScalarVolume &v) {
    std::vector<P3> out;
    const auto &d = v.grid.dims;
    auto fg = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= d[0] || y >= d[1] || z >= d[2]) return false;
        return v.at(x, y, z) >= 0.5;
    };
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                if (fg(x, y, z) && (!fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                                    !fg(x, y, z - 1) || !fg(x, y, z + 1)))
                    out.push_back({x, y, z});
    return out;
}

double brute_rhd95(const ScalarVolume &a, const ScalarVolume &b) {
    const auto sa = surface_of(a), sb = surface_of(b);
    std::vector<double> d;
    auto directed = [&](const std::vector<P3> &from, const std::vector<P3> &to) {
        for (const auto &p : from) {
            double best = 1e300;
            for (const auto &q : to) {
                const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
                best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
            d.push_back(std::sqrt(best));
        }
    };
    directed(sa, sb);
    directed(sb, sa);
    std::sort(d.begin(), d.end());
    const double pos = 0.95 * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

ScalarVolume blobs(const GridSpec &g, Rng &rng) {
    std::uniform_real_distribution<double> pos(2.0, g.dims[0] - 3.0), rad(1.5, 4.5), u(0, 1);
    ScalarVolume v(g);
    const int k = 1 + static_cast<int>(u(rng) * 3);
    for (int b = 0; b < k; ++b) {
        const double cx = pos(rng), cy = pos(rng), cz = pos(rng), r = rad(rng);
        for (int z = 0; z < g.dims[2]; ++z)
            for (int y = 0; y < g.dims[1]; ++y)
                for (int x = 0; x < g.dims[0]; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz) < r * r) v.at(x, y, z) = 1.0;
    }
    for (auto &x : v.data)
        if (u(rng) < 0.01) x = 1.0;
    return v;
}

Outcome metrics_oracle() {
    Outcome o;
    Rng rng(707);
    auto g = GridSpec::cube(16);
    double worst = 0.0, worst_j = 0.0;
    for (int t = 0; t < 20; ++t) {
        auto a = blobs(g, rng), b = blobs(g, rng);
        worst = std::max(worst, rel_err(rhd95(a, b), brute_rhd95(a, b)));
        const double d = hard_dice(a, b);
        worst_j = std::max(worst_j, std::abs(jaccard(a, b) - d / (2 - d)));
    }
    note(o, worst < 1e-12, fmt("rhd95 vs brute force max rel err %.1e (20 instances)", worst));
    note(o, worst_j < 1e-15, fmt("|J - D/(2-D)| %.1e", worst_j));
    auto c8 = GridSpec::cube(8);
    auto a = box(c8, {0, 0, 0}, {4, 4, 4}), b = box(c8, {2, 0, 0}, {6, 4, 4});
    note(o, hard_dice(a, b) == 0.5 && std::abs(jaccard(a, b) - 1.0 / 3.0) < 1e-15,
         "half-overlap cubes D=" + fmt("%.3f", hard_dice(a, b)) + " J=" + fmt("%.4f", jaccard(a, b)));
    return o;
}

// 8 ---------------------------------------------------------------------------
Outcome atlas_regression() {
    Outcome o;
    const auto t0 = clk::now();
    RunConfig cfg;
    cfg.grid = 24;
    auto m = cfg.metric();
    auto ds = synth_dataset(TemplateKind::TwoLobe, 8, cfg.grid_spec(), cfg.deform_scale, m, cfg.shooting(), 808);
    std::vector<ScalarVolume> vols;
    for (const auto &s : ds.subjects) vols.push_back(s.volume);
    auto st = fit_atlas(vols, m, cfg.atlas_config(), cfg.shooting());
    int rises = 0;
    const int iters = static_cast<int>(st.energy_trace.size()) - 1;
    for (int i = 1; i <= iters; ++i) rises += st.energy_trace[i] > st.energy_trace[i - 1];
    const double frac = 1.0 - static_cast<double>(rises) / iters;
    const double dsc = hard_dice(st.atlas, ds.templ);
    const double t = seconds_since(t0);
    note(o, frac >= 0.95, std::to_string(iters - rises) + "/" + std::to_string(iters) + " non-increasing iterations");
    note(o, dsc >= 0.90, fmt("atlas vs template DSC %.4f", dsc));
    note(o, t < 600.0, fmt("%.0f s", t));
    return o;
}

// 9 ---------------------------------------------------------------------------
Outcome end_to_end() {
    Outcome o;
    const auto t0 = clk::now();
    RunConfig cfg; // 16^3, T = 50, 8 slices, p = 3
    // Best desk-scale setting found: more subjects and a narrower net trained longer.
    cfg.subjects = 48;
    cfg.channels = 8;
    cfg.blocks = 2;
    cfg.epochs = 70;
    cfg.atlas_iters = 100;
    cfg.atlas_lr_velocity = 2.0;
    cfg.block_atlas_iters = 10;
    cfg.seed = 11;
    auto m = cfg.metric();
    const auto sc = cfg.shooting();
    auto ds = synth_dataset(parse_template_kind(cfg.template_kind), cfg.subjects, cfg.grid_spec(), cfg.deform_scale,
                            m, sc, cfg.seed);
    std::vector<ScalarVolume> train_vols;
    std::vector<SliceStack> train_stacks;
    std::vector<const SyntheticSubject *> held;
    const int axis = parse_axis(cfg.slice_axis);
    for (const auto &s : ds.subjects) {
        if (s.split == Split::Train) {
            train_vols.push_back(s.volume);
            train_stacks.push_back(extract_slices(s.volume, axis, cfg.slice_count));
        } else {
            held.push_back(&s);
        }
    }
    auto state = fit_atlas(train_vols, m, cfg.atlas_config(), sc);
    const auto sched = cfg.schedule();
    auto trained = train(train_vols, train_stacks, state, sched, m, sc, cfg.train_config());

    double sum_sadir = 0.0, sum_atlas = 0.0;
    int positive = 0;
    std::ostringstream per;
    for (std::size_t k = 0; k < held.size(); ++k) {
        const auto &s = *held[k];
        auto r = reconstruct(trained.params, state.atlas, extract_slices(s.volume, axis, cfg.slice_count), sched, m,
                             sc, cfg.seed + k, cfg.init_std, &s.volume);
        sum_sadir += r.metrics->dsc;
        const double base = hard_dice(state.atlas, s.volume);
        sum_atlas += base;
        positive += r.jacobian_positive ? 1 : 0;
        per << (k ? ", " : "") << s.id << " " << fmt("%.3f", r.metrics->dsc) << "/" << fmt("%.3f", base);
    }
    const double n = static_cast<double>(held.size());
    const double sadir = sum_sadir / n, atlas = sum_atlas / n;
    const double t = seconds_since(t0);
    note(o, sadir >= 0.85, fmt("held-out SADIR DSC %.4f", sadir));
    note(o, sadir > atlas, fmt("atlas-only DSC %.4f", atlas));
    note(o, positive == static_cast<int>(held.size()),
         "positive Jacobians " + std::to_string(positive) + "/" + std::to_string(held.size()));
    note(o, t < 1800.0, fmt("%.0f s", t));
    o.detail += " [" + per.str() + "]";
    return o;
}

// 10 --------------------------------------------------------------------------
Outcome variational_baseline() {
    Outcome o;
    RunConfig cfg;
    auto m = cfg.metric();
    auto ds = synth_dataset(TemplateKind::TwoLobe, 4, cfg.grid_spec(), cfg.deform_scale, m, cfg.shooting(), 1010);
    double worst = 1.0;
    for (const auto &s : ds.subjects) {
        auto r = variational_reconstruct(ds.templ, extract_slices(s.volume, 2, 8), m, cfg.shooting(),
                                         cfg.variational_config(), &s.volume);
        worst = std::min(worst, r.metrics->dsc);
    }
    auto self = variational_reconstruct(ds.templ, extract_slices(ds.templ, 2, 8), m, cfg.shooting(),
                                        cfg.variational_config(), &ds.templ);
    note(o, worst >= 0.90, fmt("min DSC over 4 subjects %.4f", worst));
    note(o, self.metrics->dsc >= 0.99, fmt("atlas-slices DSC %.4f", self.metrics->dsc));
    return o;
}

// 11 --------------------------------------------------------------------------
int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sadir");
    std::vector<char *> argv;
    for (auto &a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string bytes_of(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism() {
    Outcome o;
    // Small but trained enough that sampling stays in range.
    const std::vector<std::string> small{"--grid",        "12", "--subjects",     "4",  "--atlas-iters", "30",
                                         "--block-atlas-iters", "5", "--epochs", "100", "--alternations", "2",
                                         "--channels",    "4",  "--blocks",       "1",  "--embed-dim",   "8",
                                         "--lr",          "1e-2", "--slice-count", "4", "--seed",        "31"};
    fs::path dirs[2] = {temp_dir("accept_det_a"), temp_dir("accept_det_b")};
    bool ok = true;
    for (const auto &d : dirs) {
        auto with = [&](std::vector<std::string> extra) {
            auto a = small;
            a.insert(a.end(), extra.begin(), extra.end());
            return cli(a);
        };
        const auto man = (d / "data" / "manifest.txt").string();
        ok = ok && with({"--out-dir", (d / "data").string(), "synth"}) == 0;
        ok = ok && with({"--out-dir", (d / "fit").string(), "atlas", "--manifest", man}) == 0;
        ok = ok && with({"--out-dir", (d / "model").string(), "train", "--manifest", man, "--atlas",
                         (d / "fit" / "atlas").string()}) == 0;
        ok = ok && with({"--out-dir", (d / "rec").string(), "reconstruct", "--model",
                         (d / "model" / "denoiser.tns").string(), "--atlas", (d / "model" / "atlas").string(),
                         "--manifest", man, "--split", "all"}) == 0;
    }
    note(o, ok, "pipeline ran twice");
    int files = 0, differ = 0;
    for (const auto &e : fs::recursive_directory_iterator(dirs[0])) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dirs[0]);
        ++files;
        if (!fs::exists(dirs[1] / rel) || bytes_of(e.path()) != bytes_of(dirs[1] / rel)) ++differ;
    }
    note(o, files > 0 && differ == 0, std::to_string(files - differ) + "/" + std::to_string(files) + " files identical");
    return o;
}

struct Criterion {
    int id;
    const char *name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char **argv) {
    const std::vector<Criterion> all{
        {1, "operator identity", operator_identity},
        {2, "shooting gradients", shooting_gradients},
        {3, "atlas gradients", atlas_gradients},
        {4, "EPDiff conservation", epdiff_conservation},
        {5, "diffusion identities", diffusion_identities},
        {6, "denoiser gradients", denoiser_gradients},
        {7, "metrics oracle", metrics_oracle},
        {8, "atlas regression", atlas_regression},
        {9, "end-to-end SADIR regression", end_to_end},
        {10, "variational baseline", variational_baseline},
        {11, "determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto &c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = clk::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception &e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        failed += !out.pass;
        std::printf("[%s] %2d %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
