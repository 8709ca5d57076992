#include "sadir/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sadir/errors.hpp"

namespace sadir {

void TrainConfig::validate() const {
    if (!(lambda >= 0.0) || !(eta >= 0.0) || !(eps_loss_weight >= 0.0))
        throw ParameterError("loss weights must be non-negative");
    if (epochs < 0) throw ParameterError("epochs must be non-negative");
    if (alternations < 1) throw ParameterError("alternations must be >= 1");
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ParameterError("weight decay must be non-negative");
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

struct DiceSums {
    double ab = 0.0, a = 0.0, b = 0.0;
};

DiceSums dice_sums(const ScalarVolume &a, const ScalarVolume &b) {
    require_same_grid(a.grid, b.grid, "soft_dice");
    DiceSums s;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = clamp01(a.data[i]), y = clamp01(b.data[i]);
        s.ab += x * y;
        s.a += x;
        s.b += y;
    }
    return s;
}

ScalarVolume masked(const ScalarVolume &v, const ScalarVolume &mask) {
    ScalarVolume out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i] * mask.data[i];
    return out;
}

} // namespace

double latent_rms(const FluidMetric &metric, std::span<const VectorField> velocities) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto &v : velocities) {
        const VectorField x = metric.apply_sqrt_L(v);
        for (double e : x.data) s += e * e;
        n += x.data.size();
    }
    return n > 0 ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

VectorField to_latent(const FluidMetric &metric, const VectorField &v, double scale) {
    VectorField x = metric.apply_sqrt_L(v);
    for (auto &e : x.data) e *= scale;
    return x;
}

VectorField from_latent(const FluidMetric &metric, const VectorField &x, double scale) {
    VectorField v = metric.apply_sqrt_K(x);
    for (auto &e : v.data) e /= scale;
    return v;
}

double soft_dice(const ScalarVolume &a, const ScalarVolume &b) {
    const auto s = dice_sums(a, b);
    if (s.a + s.b == 0.0) return 1.0;
    return 2.0 * s.ab / (s.a + s.b);
}

ScalarVolume soft_dice_grad(const ScalarVolume &a, const ScalarVolume &b) {
    const auto s = dice_sums(a, b);
    ScalarVolume g(a.grid);
    const double den = s.a + s.b;
    if (den == 0.0) return g;
    const double d = 2.0 * s.ab / den;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] < 0.0 || a.data[i] > 1.0) continue;
        g.data[i] = (2.0 * clamp01(b.data[i]) - d) / den;
    }
    return g;
}

LossResult diffusion_loss(const DenoiserParams &params, const TrainingSubject &subject, int tau,
                          const VectorField &eps, const NoiseSchedule &sched, const FluidMetric &metric,
                          const ShootingConfig &shoot_cfg, const TrainConfig &cfg) {
    sched.check_tau(tau);
    const auto &atlas = subject.cond.atlas;
    require_same_grid(subject.volume.grid, atlas.grid, "diffusion_loss subject");
    require_same_grid(subject.target_v0.grid, atlas.grid, "diffusion_loss target");
    require_same_grid(eps.grid, atlas.grid, "diffusion_loss noise");

    const double s = params.config().latent_scale;
    const VectorField y_tau = forward_sample(sched, to_latent(metric, subject.target_v0, s), tau, eps);
    DenoiserTape tape;
    const VectorField eps_hat = denoiser_forward(params, y_tau, tau, subject.cond, &tape);

    const std::size_t n = atlas.grid.size();
    LossResult out;
    VectorField d_eps(eps.grid);

    double se = 0.0;
    for (std::size_t i = 0; i < eps.data.size(); ++i) {
        const double d = eps_hat.data[i] - eps.data[i];
        se += d * d;
    }
    const double n_eps = static_cast<double>(eps.data.size());
    out.terms.eps_mse = se / n_eps;
    out.terms.total = cfg.eps_loss_weight * out.terms.eps_mse;
    if (cfg.eps_loss_weight != 0.0)
        for (std::size_t i = 0; i < eps.data.size(); ++i)
            d_eps.data[i] = cfg.eps_loss_weight * 2.0 * (eps_hat.data[i] - eps.data[i]) / n_eps;

    const double ab = sched.alpha_bar_at(tau);
    const double w = ab >= cfg.image_weight_floor ? ab : 0.0;
    if (cfg.lambda > 0.0 && w > 0.0) {
        out.terms.image_weight = w;
        const VectorField v0 = from_latent(metric, predict_x0(sched, y_tau, tau, eps_hat), s);
        const auto traj = shoot(metric, v0, ShootingConfig{shoot_cfg.steps, true});
        const ScalarVolume y_hat = warp(atlas, traj.transform);
        double ssd = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = y_hat.data[i] - subject.volume.data[i];
            ssd += d * d;
        }
        out.terms.ssd = ssd;
        out.terms.dice = soft_dice(y_hat, subject.volume);
        const double scale = cfg.lambda * w;
        out.terms.total += scale * (ssd / static_cast<double>(n) + cfg.eta * (1.0 - out.terms.dice));

        ScalarVolume r(atlas.grid);
        const ScalarVolume dg = soft_dice_grad(y_hat, subject.volume);
        for (std::size_t i = 0; i < n; ++i)
            r.data[i] = scale * (2.0 * (y_hat.data[i] - subject.volume.data[i]) / static_cast<double>(n) -
                                 cfg.eta * dg.data[i]);
        const auto adj = warp_adjoint(r, traj.transform, atlas);
        const VectorField d_x0 = from_latent(metric, shoot_vjp(metric, traj, adj.d_u), s);
        const double c = -std::sqrt(1.0 - ab) / std::sqrt(ab);
        for (std::size_t i = 0; i < d_eps.data.size(); ++i) d_eps.data[i] += c * d_x0.data[i];
    }
    if (!std::isfinite(out.terms.total)) throw DivergenceError("diffusion loss is not finite");
    out.grads = denoiser_backward(params, tape, d_eps).params;
    return out;
}

LossResult diffusion_loss(const DenoiserParams &params, const TrainingSubject &subject, Rng &rng,
                          const NoiseSchedule &sched, const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                          const TrainConfig &cfg) {
    std::uniform_int_distribution<int> pick(1, sched.T);
    const int tau = pick(rng);
    const VectorField eps = normal_field(rng, subject.target_v0.grid);
    return diffusion_loss(params, subject, tau, eps, sched, metric, shoot_cfg, cfg);
}

TrainResult train(std::span<const ScalarVolume> dataset, std::span<const SliceStack> stacks, AtlasState &state,
                  const NoiseSchedule &sched, const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                  const TrainConfig &cfg, const TrainLogger &log) {
    Rng init_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return train(DenoiserParams::init(cfg.denoiser, init_rng), dataset, stacks, state, sched, metric, shoot_cfg, cfg,
                 log);
}

TrainResult train(DenoiserParams params, std::span<const ScalarVolume> dataset, std::span<const SliceStack> stacks,
                  AtlasState &state, const NoiseSchedule &sched, const FluidMetric &metric,
                  const ShootingConfig &shoot_cfg, const TrainConfig &cfg, const TrainLogger &log) {
    cfg.validate();
    if (dataset.size() != stacks.size())
        throw DimensionError("train needs one slice stack per subject (" + std::to_string(dataset.size()) + " vs " +
                             std::to_string(stacks.size()) + ")");
    auto say = [&](const std::string &s) {
        if (log) log(s);
    };
    Rng rng(cfg.seed);
    AdamOptimizer adam(params);
    const bool updates = cfg.lambda > 0.0 || cfg.eps_loss_weight > 0.0;
    const long total_steps = static_cast<long>(cfg.alternations) * cfg.epochs * static_cast<long>(dataset.size());
    long step = 0;

    TrainResult result;
    for (int block = 0; block < cfg.alternations; ++block) {
        BlockLog bl;
        bl.block = block;
        refine_atlas(state, dataset, metric, cfg.atlas, shoot_cfg);
        bl.atlas_energy = state.energy_trace.back();
        {
            std::ostringstream os;
            os << "block " << block << " atlas_energy " << bl.atlas_energy;
            say(os.str());
        }
        if (block == 0 && cfg.fit_latent_scale) {
            const double r = latent_rms(metric, state.velocities);
            if (r > 0.0) params.set_latent_scale(1.0 / r);
            std::ostringstream os;
            os << "latent_scale " << params.config().latent_scale;
            say(os.str());
        }

        std::vector<TrainingSubject> subjects;
        subjects.reserve(dataset.size());
        for (std::size_t n = 0; n < dataset.size(); ++n) {
            TrainingSubject s{dataset[n], make_conditioning(state.atlas, stacks[n]), state.velocities[n]};
            subjects.push_back(std::move(s));
        }

        std::vector<std::size_t> order(dataset.size());
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            double sum = 0.0;
            int used = 0;
            for (auto n : order) {
                const long this_step = step++;
                if (!updates) continue;
                LossResult lr;
                try {
                    lr = diffusion_loss(params, subjects[n], rng, sched, metric, shoot_cfg, cfg);
                } catch (const DivergenceError &e) {
                    ++bl.skipped;
                    say(std::string("skipped sample: ") + e.what());
                    continue;
                }
                adam.step(params, lr.grads, cosine_lr(cfg.lr, this_step, total_steps), cfg.weight_decay);
                if (!params.all_finite()) throw DivergenceError("denoiser parameters became non-finite");
                sum += lr.terms.total;
                ++used;
            }
            const double mean = used > 0 ? sum / used : 0.0;
            bl.epoch_loss.push_back(mean);
            std::ostringstream os;
            os << "block " << block << " epoch " << epoch << " loss " << mean;
            say(os.str());
        }
        result.blocks.push_back(std::move(bl));
    }
    result.params = std::move(params);
    return result;
}

ReconstructionResult finish_reconstruction(VectorField v0, const ScalarVolume &atlas, const FluidMetric &metric,
                                           const ShootingConfig &shoot_cfg, std::uint64_t seed,
                                           const ScalarVolume *truth) {
    ReconstructionResult r;
    ShootingConfig sc = shoot_cfg;
    sc.store_trajectory = false;
    auto traj = shoot(metric, v0, sc);
    r.v0 = std::move(v0);
    r.transform = std::move(traj.transform);
    r.volume = warp(atlas, r.transform);
    const auto det = jacobian_determinant(r.transform);
    r.jacobian_positive = std::all_of(det.data.begin(), det.data.end(), [](double d) { return d > 0.0; });
    r.seed = seed;
    if (truth) {
        try {
            r.metrics = compute_metrics(r.volume, *truth);
        } catch (const UndefinedMetricError &) {
            // An empty reconstruction still gets a record; its surface distance is unbounded.
            MetricRecord m;
            m.dsc = hard_dice(r.volume, *truth);
            m.jaccard = jaccard(r.volume, *truth);
            m.rhd95 = std::numeric_limits<double>::infinity();
            m.mse = compute_mse(r.volume, *truth);
            r.metrics = m;
        }
    }
    return r;
}

ReconstructionResult reconstruct_with(const EpsPredictor &predictor, const ScalarVolume &atlas,
                                      const SliceStack &slices, const NoiseSchedule &sched,
                                      const FluidMetric &metric, const ShootingConfig &shoot_cfg, std::uint64_t seed,
                                      double init_std, const ScalarVolume *truth, double latent_scale) {
    require_same_grid(atlas.grid, metric.grid(), "reconstruct");
    if (!(latent_scale > 0.0)) throw ParameterError("latent scale must be positive");
    const ConditioningPack cond = make_conditioning(atlas, slices);
    try {
        Rng rng(seed);
        VectorField v0 = from_latent(metric, sample(sched, predictor, cond, rng, init_std), latent_scale);
        return finish_reconstruction(std::move(v0), atlas, metric, shoot_cfg, seed, truth);
    } catch (const DivergenceError &e) {
        throw DivergenceError(std::string(e.what()) + " (seed " + std::to_string(seed) + ")");
    }
}

ReconstructionResult reconstruct(const DenoiserParams &params, const ScalarVolume &atlas, const SliceStack &slices,
                                 const NoiseSchedule &sched, const FluidMetric &metric,
                                 const ShootingConfig &shoot_cfg, std::uint64_t seed, double init_std,
                                 const ScalarVolume *truth) {
    return reconstruct_with(as_predictor(params), atlas, slices, sched, metric, shoot_cfg, seed, init_std, truth,
                            params.config().latent_scale);
}

namespace {

void check_variational(const VariationalConfig &cfg) {
    if (cfg.iters < 0) throw ParameterError("variational iterations must be non-negative");
    if (!(cfg.lr > 0.0)) throw ParameterError("variational learning rate must be positive");
    if (!(cfg.sigma > 0.0)) throw ParameterError("variational sigma must be positive");
    if (!(cfg.eta >= 0.0)) throw ParameterError("variational eta must be non-negative");
}

double data_part(const ScalarVolume &y_hat, const ConditioningPack &cond, double eta) {
    double s = 0.0;
    for (std::size_t i = 0; i < y_hat.data.size(); ++i) {
        const double d = cond.slice_mask.data[i] * (y_hat.data[i] - cond.slices_embedded.data[i]);
        s += d * d;
    }
    if (eta > 0.0) s += eta * (1.0 - soft_dice(masked(y_hat, cond.slice_mask), cond.slices_embedded));
    return s;
}

} // namespace

double variational_objective(const ScalarVolume &atlas, const ConditioningPack &cond, const VectorField &v0,
                             const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                             const VariationalConfig &cfg) {
    ShootingConfig sc = shoot_cfg;
    sc.store_trajectory = false;
    const auto traj = shoot(metric, v0, sc);
    const ScalarVolume y_hat = warp(atlas, traj.transform);
    return data_part(y_hat, cond, cfg.eta) / (cfg.sigma * cfg.sigma) + velocity_norm(metric, v0);
}

VectorField variational_gradient(const ScalarVolume &atlas, const ConditioningPack &cond, const VectorField &v0,
                                 const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                                 const VariationalConfig &cfg) {
    const auto traj = shoot(metric, v0, ShootingConfig{shoot_cfg.steps, true});
    const ScalarVolume y_hat = warp(atlas, traj.transform);
    const double inv = 1.0 / (cfg.sigma * cfg.sigma);
    ScalarVolume r(atlas.grid);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const double m = cond.slice_mask.data[i];
        r.data[i] = inv * 2.0 * m * m * (y_hat.data[i] - cond.slices_embedded.data[i]);
    }
    if (cfg.eta > 0.0) {
        const ScalarVolume dg = soft_dice_grad(masked(y_hat, cond.slice_mask), cond.slices_embedded);
        for (std::size_t i = 0; i < r.data.size(); ++i)
            r.data[i] -= inv * cfg.eta * cond.slice_mask.data[i] * dg.data[i];
    }
    const auto adj = warp_adjoint(r, traj.transform, atlas);
    VectorField g = shoot_vjp(metric, traj, adj.d_u);
    const VectorField lv = metric.apply_L(v0);
    const double vox = v0.grid.voxel_volume();
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += 2.0 * vox * lv.data[i];
    return g;
}

ReconstructionResult variational_reconstruct(const ScalarVolume &atlas, const SliceStack &slices,
                                             const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                                             const VariationalConfig &cfg, const ScalarVolume *truth) {
    check_variational(cfg);
    require_same_grid(atlas.grid, metric.grid(), "variational_reconstruct");
    if (slices.indices.empty()) throw ParameterError("variational reconstruction needs at least one slice");
    const ConditioningPack cond = make_conditioning(atlas, slices);

    VectorField v(atlas.grid);
    VectorField best = v;
    double e = variational_objective(atlas, cond, v, metric, shoot_cfg, cfg);
    double best_e = e;
    std::vector<double> trace{e};
    double lr = cfg.lr;
    int rises = 0;
    const double step_scale = 0.5 * cfg.sigma * cfg.sigma;
    for (int it = 0; it < cfg.iters; ++it) {
        const VectorField g = metric.apply_K(variational_gradient(atlas, cond, v, metric, shoot_cfg, cfg));
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= lr * step_scale * g.data[i];
        double next;
        try {
            next = variational_objective(atlas, cond, v, metric, shoot_cfg, cfg);
        } catch (const DivergenceError &) {
            next = std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(next)) {
            // Back off to the best point with a smaller step.
            v = best;
            lr *= 0.5;
            rises = 0;
            trace.push_back(best_e);
            continue;
        }
        if (next > trace.back()) {
            if (++rises >= 2) {
                lr *= 0.5;
                rises = 0;
            }
        } else {
            rises = 0;
        }
        trace.push_back(next);
        if (next < best_e) {
            best_e = next;
            best = v;
        }
    }
    auto r = finish_reconstruction(std::move(best), atlas, metric, shoot_cfg, 0, truth);
    r.objective_trace = std::move(trace);
    return r;
}

} // namespace sadir
