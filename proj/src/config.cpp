#include "sadir/config.hpp"

#include <sstream>

#include "sadir/errors.hpp"
#include "sadir/io.hpp"

namespace sadir {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T> T parse_value(const std::string &key, const std::string &s) {
    std::istringstream in(s);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof())
        throw UsageError("invalid value '" + s + "' for config key " + key);
    return v;
}

template <class T> std::string show(const T &v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <class T> ConfigKey key(std::string name, std::string help, T RunConfig::*field) {
    ConfigKey k;
    k.name = name;
    k.help = std::move(help);
    k.get = [field](const RunConfig &c) { return show(c.*field); };
    k.set = [field, name](RunConfig &c, const std::string &s) {
        if constexpr (std::is_same_v<T, std::string>)
            c.*field = s;
        else
            c.*field = parse_value<T>(name, s);
    };
    return k;
}

} // namespace

GridSpec RunConfig::grid_spec() const { return GridSpec::cube(grid); }

MetricParams RunConfig::metric_params() const { return MetricParams{alpha, gamma, power}; }

FluidMetric RunConfig::metric() const { return build_metric(grid_spec(), alpha, gamma, power); }

ShootingConfig RunConfig::shooting() const {
    if (shoot_steps < 1) throw ParameterError("shoot_steps must be >= 1");
    return ShootingConfig{shoot_steps, true};
}

NoiseSchedule RunConfig::schedule() const {
    if (beta_start == 0.0 && beta_end == 0.0) return default_schedule(timesteps);
    return linear_schedule(timesteps, beta_start, beta_end);
}

AtlasConfig RunConfig::atlas_config() const {
    AtlasConfig a;
    a.outer_iters = atlas_iters;
    a.lr_velocity = atlas_lr_velocity;
    a.lr_atlas = atlas_lr_atlas;
    a.sigma = sigma;
    a.reg_weight = atlas_reg;
    return a;
}

DenoiserConfig RunConfig::denoiser_config() const { return DenoiserConfig{channels, blocks, embed_dim, se_reduction, latent_scale == 0.0 ? 1.0 : latent_scale}; }

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lambda = lambda;
    t.eta = eta;
    t.eps_loss_weight = eps_loss_weight;
    t.epochs = epochs;
    t.alternations = alternations;
    t.seed = seed;
    t.lr = lr;
    t.weight_decay = weight_decay;
    t.atlas = atlas_config();
    t.atlas.outer_iters = block_atlas_iters;
    t.denoiser = denoiser_config();
    t.fit_latent_scale = latent_scale == 0.0;
    return t;
}

VariationalConfig RunConfig::variational_config() const {
    VariationalConfig v;
    v.iters = var_iters;
    v.lr = var_lr;
    v.eta = eta;
    v.sigma = sigma;
    return v;
}

const std::vector<ConfigKey> &config_keys() {
    static const std::vector<ConfigKey> keys = {
        key("seed", "random seed for every stochastic step", &RunConfig::seed),
        key("grid", "cubic grid size", &RunConfig::grid),
        key("alpha", "metric Laplacian weight", &RunConfig::alpha),
        key("gamma", "metric identity weight", &RunConfig::gamma),
        key("power", "metric exponent", &RunConfig::power),
        key("shoot_steps", "Euler steps for geodesic shooting", &RunConfig::shoot_steps),
        key("subjects", "number of synthetic subjects", &RunConfig::subjects),
        key("template", "synthetic template: two-lobe, torus or ellipsoid", &RunConfig::template_kind),
        key("deform_scale", "max |v0| of synthetic deformations (voxels)", &RunConfig::deform_scale),
        key("slice_axis", "slice axis: x, y or z", &RunConfig::slice_axis),
        key("slice_count", "number of observed slices", &RunConfig::slice_count),
        key("atlas_iters", "outer iterations for atlas building", &RunConfig::atlas_iters),
        key("atlas_lr_velocity", "atlas velocity step size", &RunConfig::atlas_lr_velocity),
        key("atlas_lr_atlas", "atlas image step size", &RunConfig::atlas_lr_atlas),
        key("sigma", "image noise scale in the data terms", &RunConfig::sigma),
        key("atlas_reg", "atlas gradient-smoothness weight", &RunConfig::atlas_reg),
        key("timesteps", "diffusion steps T", &RunConfig::timesteps),
        key("beta_start", "first beta (0 with beta_end 0 = scaled default)", &RunConfig::beta_start),
        key("beta_end", "last beta", &RunConfig::beta_end),
        key("init_std", "std of the sampler's starting noise", &RunConfig::init_std),
        key("channels", "denoiser width C", &RunConfig::channels),
        key("blocks", "denoiser residual blocks R", &RunConfig::blocks),
        key("embed_dim", "time embedding size", &RunConfig::embed_dim),
        key("se_reduction", "squeeze-excitation reduction", &RunConfig::se_reduction),
        key("latent_scale", "scale of the whitened velocity the diffusion runs on (0 = fit)", &RunConfig::latent_scale),
        key("lambda", "image-loss weight", &RunConfig::lambda),
        key("eta", "Dice weight", &RunConfig::eta),
        key("eps_loss_weight", "epsilon-matching weight", &RunConfig::eps_loss_weight),
        key("epochs", "denoiser epochs per alternation block", &RunConfig::epochs),
        key("alternations", "alternation blocks p", &RunConfig::alternations),
        key("block_atlas_iters", "atlas iterations per alternation block", &RunConfig::block_atlas_iters),
        key("lr", "Adam base learning rate (cosine decay)", &RunConfig::lr),
        key("weight_decay", "L2 weight decay", &RunConfig::weight_decay),
        key("var_iters", "variational baseline iterations", &RunConfig::var_iters),
        key("var_lr", "variational baseline step size", &RunConfig::var_lr),
    };
    return keys;
}

void set_config_value(RunConfig &cfg, const std::string &name, const std::string &value) {
    for (const auto &k : config_keys())
        if (k.name == name) {
            k.set(cfg, value);
            return;
        }
    throw UsageError("unknown config key: " + name);
}

void apply_config_text(RunConfig &cfg, const std::string &text, const std::string &what) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> unknown;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(what + ": line " + std::to_string(lineno) + ": expected key=value");
        const auto name = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto &k : config_keys())
            if (k.name == name) {
                k.set(cfg, value);
                found = true;
                break;
            }
        if (!found) unknown.push_back(name);
    }
    if (!unknown.empty()) {
        std::string msg = what + ": unknown config keys:";
        for (const auto &u : unknown) msg += " " + u;
        throw UsageError(msg);
    }
}

void apply_config_file(RunConfig &cfg, const std::string &path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const FormatError &) {
        throw UsageError("cannot read config file " + path);
    }
    apply_config_text(cfg, text, path);
}

std::string format_config(const RunConfig &cfg) {
    std::string out;
    for (const auto &k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

} // namespace sadir
