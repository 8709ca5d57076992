#pragma once

// Flat key=value run configuration shared by every CLI subcommand.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sadir/atlas.hpp"
#include "sadir/denoiser.hpp"
#include "sadir/diffusion.hpp"
#include "sadir/geodesic.hpp"
#include "sadir/metric.hpp"
#include "sadir/pipeline.hpp"
#include "sadir/synth.hpp"

namespace sadir {

struct RunConfig {
    std::uint64_t seed = 0;
    int grid = 16;

    // metric and shooting
    double alpha = 3.0;
    double gamma = 1.0;
    int power = 3;
    int shoot_steps = 10;

    // synthetic data
    int subjects = 8;
    std::string template_kind = "two-lobe";
    double deform_scale = 1.5;
    std::string slice_axis = "z";
    int slice_count = 8;

    // atlas
    int atlas_iters = 60;
    double atlas_lr_velocity = 0.5;
    double atlas_lr_atlas = 0.5;
    double sigma = 0.02;
    double atlas_reg = 0.0;

    // diffusion
    int timesteps = 50;
    double beta_start = 0.0; // 0 selects the scaled default schedule
    double beta_end = 0.0;
    double init_std = 0.1;

    // denoiser
    int channels = 16;
    int blocks = 4;
    int embed_dim = 32;
    int se_reduction = 4;
    double latent_scale = 0.0; // 0 fits it to the training targets

    // training
    double lambda = 1.0;
    double eta = 0.5;
    double eps_loss_weight = 1.0;
    int epochs = 30;
    int alternations = 3;
    int block_atlas_iters = 20;
    double lr = 2e-3;
    double weight_decay = 0.0;

    // variational baseline
    int var_iters = 200;
    double var_lr = 2.0;

    GridSpec grid_spec() const;
    MetricParams metric_params() const;
    FluidMetric metric() const;
    ShootingConfig shooting() const;
    NoiseSchedule schedule() const;
    AtlasConfig atlas_config() const;
    DenoiserConfig denoiser_config() const;
    TrainConfig train_config() const;
    VariationalConfig variational_config() const;
};

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<std::string(const RunConfig &)> get;
    // Throws UsageError on an unparsable value.
    std::function<void(RunConfig &, const std::string &)> set;
};

const std::vector<ConfigKey> &config_keys();

// Applies key=value lines (# comments, blank lines ignored). Unknown keys are
// collected and reported together as a UsageError.
void apply_config_text(RunConfig &cfg, const std::string &text, const std::string &what = "config");
void apply_config_file(RunConfig &cfg, const std::string &path);
void set_config_value(RunConfig &cfg, const std::string &key, const std::string &value);
std::string format_config(const RunConfig &cfg);

} // namespace sadir
