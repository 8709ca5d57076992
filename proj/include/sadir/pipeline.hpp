#pragma once

// Joint atlas/denoiser training, diffusion-based reconstruction from sparse
// slices, and a learning-free variational baseline.
//
// The diffusion runs on whitened velocities x = s L^(1/2) v; generated samples
// are mapped back with v = K^(1/2) x / s before shooting. Forward-Euler EPDiff
// blows up on white velocity noise of a few hundredths of a voxel, and the
// whitening keeps residual sampler noise in the smooth band.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sadir/atlas.hpp"
#include "sadir/denoiser.hpp"
#include "sadir/diffusion.hpp"
#include "sadir/metrics.hpp"
#include "sadir/synth.hpp"

namespace sadir {

struct TrainConfig {
    double lambda = 1.0;          // weight of the image-space term
    double eta = 0.5;             // Dice weight inside the image term
    double eps_loss_weight = 1.0; // weight of the epsilon-matching term
    int epochs = 30;              // denoiser epochs per alternation block
    int alternations = 3;         // p
    std::uint64_t seed = 0;
    double lr = 2e-3;
    double weight_decay = 0.0;
    // The image term at step tau is weighted by alpha_bar(tau) and dropped
    // below this floor, where predict_x0 is dominated by noise.
    double image_weight_floor = 0.3;
    // Set the denoiser's latent scale after the first atlas refinement so the
    // latent targets have unit RMS.
    bool fit_latent_scale = false;
    AtlasConfig atlas{.outer_iters = 20};
    DenoiserConfig denoiser{};
    void validate() const;
};

// x = scale * L^(1/2) v and its inverse v = K^(1/2) x / scale. from_latent is
// self-adjoint, so it also maps velocity cotangents back to latent ones.
VectorField to_latent(const FluidMetric &metric, const VectorField &v, double scale);
VectorField from_latent(const FluidMetric &metric, const VectorField &x, double scale);
// RMS of L^(1/2) v over all fields; 0 for an empty list.
double latent_rms(const FluidMetric &metric, std::span<const VectorField> velocities);

// Soft Dice 2 sum(ab) / (sum a + sum b) on inputs clamped to [0, 1]; 0/0 -> 1.
double soft_dice(const ScalarVolume &a, const ScalarVolume &b);
// Gradient with respect to `a` (zero where a is clamped).
ScalarVolume soft_dice_grad(const ScalarVolume &a, const ScalarVolume &b);

struct TrainingSubject {
    ScalarVolume volume;      // Y
    ConditioningPack cond;    // atlas + embedded slices of Y
    VectorField target_v0;    // v0* from atlas-stage registration
};

struct LossTerms {
    double total = 0.0;
    double ssd = 0.0;           // ||S o phi(x0_hat) - Y||^2, unnormalized
    double dice = 1.0;          // soft Dice of the reconstruction
    double eps_mse = 0.0;       // mean (eps_hat - eps)^2
    double image_weight = 0.0;  // alpha_bar(tau), or 0 when the image term is off
};

struct LossResult {
    LossTerms terms;
    DenoiserParams grads;
};

// loss = lambda * w * [ssd / n + eta * (1 - dice)] + eps_loss_weight * eps_mse
// at the given tau and noise draw, where the target is L^(1/2) target_v0 and
// the image term shoots K^(1/2) x0_hat; n is the voxel count. Throws
// DivergenceError when shooting fails.
LossResult diffusion_loss(const DenoiserParams &params, const TrainingSubject &subject, int tau,
                          const VectorField &eps, const NoiseSchedule &sched, const FluidMetric &metric,
                          const ShootingConfig &shoot_cfg, const TrainConfig &cfg);
// Same with tau ~ U{1..T} and eps ~ N(0, I) drawn from rng.
LossResult diffusion_loss(const DenoiserParams &params, const TrainingSubject &subject, Rng &rng,
                          const NoiseSchedule &sched, const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                          const TrainConfig &cfg);

struct BlockLog {
    int block = 0;
    double atlas_energy = 0.0;
    std::vector<double> epoch_loss; // mean total loss per epoch
    int skipped = 0;                // samples dropped on shooting divergence
};

struct TrainResult {
    DenoiserParams params;
    std::vector<BlockLog> blocks;
};

using TrainLogger = std::function<void(const std::string &)>;

// Alternates p blocks of atlas refinement (updating `state` in place) and
// denoiser epochs on the refreshed target velocities. `stacks[n]` holds the
// slices of dataset[n].
TrainResult train(std::span<const ScalarVolume> dataset, std::span<const SliceStack> stacks, AtlasState &state,
                  const NoiseSchedule &sched, const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                  const TrainConfig &cfg, const TrainLogger &log = {});
// Continues training from existing parameters.
TrainResult train(DenoiserParams params, std::span<const ScalarVolume> dataset, std::span<const SliceStack> stacks,
                  AtlasState &state, const NoiseSchedule &sched, const FluidMetric &metric,
                  const ShootingConfig &shoot_cfg, const TrainConfig &cfg, const TrainLogger &log = {});

struct ReconstructionResult {
    VectorField v0;
    Transform transform;
    ScalarVolume volume; // warp(atlas, transform)
    std::optional<MetricRecord> metrics;
    std::uint64_t seed = 0;
    bool jacobian_positive = false;
    std::vector<double> objective_trace; // variational only
};

// Samples v0 from the conditioned reverse process, shoots and warps the atlas.
// When `truth` is given, metrics are filled in. Failures rethrow with the seed
// in the message.
ReconstructionResult reconstruct(const DenoiserParams &params, const ScalarVolume &atlas, const SliceStack &slices,
                                 const NoiseSchedule &sched, const FluidMetric &metric,
                                 const ShootingConfig &shoot_cfg, std::uint64_t seed, double init_std = 0.1,
                                 const ScalarVolume *truth = nullptr);
ReconstructionResult reconstruct_with(const EpsPredictor &predictor, const ScalarVolume &atlas,
                                      const SliceStack &slices, const NoiseSchedule &sched,
                                      const FluidMetric &metric, const ShootingConfig &shoot_cfg, std::uint64_t seed,
                                      double init_std = 0.1, const ScalarVolume *truth = nullptr,
                                      double latent_scale = 1.0);

struct VariationalConfig {
    int iters = 200;
    double lr = 2.0;     // along the K-preconditioned gradient, scaled by sigma^2 / 2
    double eta = 0.5;
    double sigma = 0.02;
};

// (1/sigma^2) (||mask (S o phi - slices)||^2 + eta (1 - softdice(mask S o phi, slices))) + <L v0, v0>.
double variational_objective(const ScalarVolume &atlas, const ConditioningPack &cond, const VectorField &v0,
                             const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                             const VariationalConfig &cfg);
VectorField variational_gradient(const ScalarVolume &atlas, const ConditioningPack &cond, const VectorField &v0,
                                 const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                                 const VariationalConfig &cfg);

// Gradient descent from v0 = 0 with the atlas divergence guard; returns the
// best iterate and the objective trace (initial value first).
ReconstructionResult variational_reconstruct(const ScalarVolume &atlas, const SliceStack &slices,
                                             const FluidMetric &metric, const ShootingConfig &shoot_cfg,
                                             const VariationalConfig &cfg = {}, const ScalarVolume *truth = nullptr);

// Builds the result fields shared by both reconstructors.
ReconstructionResult finish_reconstruction(VectorField v0, const ScalarVolume &atlas, const FluidMetric &metric,
                                           const ShootingConfig &shoot_cfg, std::uint64_t seed,
                                           const ScalarVolume *truth);

} // namespace sadir
