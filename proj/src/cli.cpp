#include "sadir/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <sstream>

#include "sadir/config.hpp"
#include "sadir/errors.hpp"
#include "sadir/io.hpp"
#include "sadir/pipeline.hpp"

namespace sadir {

namespace {

std::string flag_name(const std::string &key) {
    std::string s = key;
    std::replace(s.begin(), s.end(), '_', '-');
    return "--" + s;
}

struct Common {
    std::string config_path;
    std::string out_dir = ".";
    std::map<std::string, std::string> overrides;

    RunConfig load() const {
        RunConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        for (const auto &[k, v] : overrides) set_config_value(cfg, k, v);
        return cfg;
    }
};

void log_line(const std::string &s) { std::clog << s << '\n'; }

struct Subject {
    std::string id;
    ScalarVolume volume;
    SliceStack slices;
    bool has_slices = false;
};

std::vector<Subject> load_subjects(const fs::path &manifest_path, const std::string &split_filter,
                                   const RunConfig &cfg) {
    const auto m = read_manifest(manifest_path);
    std::vector<Subject> out;
    for (const auto &e : m.subjects) {
        if (!split_filter.empty() && split_filter != "all" && to_string(e.split) != split_filter) continue;
        Subject s;
        s.id = e.id;
        s.volume = read_volume(resolve_relative(manifest_path, e.volume));
        if (!e.slices.empty()) {
            s.slices = read_slice_stack(resolve_relative(manifest_path, e.slices));
            s.has_slices = true;
        } else {
            s.slices = extract_slices(s.volume, parse_axis(cfg.slice_axis), cfg.slice_count);
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw UsageError("no subjects in split '" + split_filter + "' of " + manifest_path.string());
    return out;
}

std::vector<ScalarVolume> volumes_of(const std::vector<Subject> &subjects) {
    std::vector<ScalarVolume> v;
    for (const auto &s : subjects) v.push_back(s.volume);
    return v;
}

std::string energy_log(const std::vector<double> &trace) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) os << i << ' ' << trace[i] << '\n';
    return os.str();
}

int cmd_synth(const Common &common) {
    const RunConfig cfg = common.load();
    const fs::path out(common.out_dir);
    const auto metric = cfg.metric();
    const auto ds = synth_dataset(parse_template_kind(cfg.template_kind), cfg.subjects, cfg.grid_spec(),
                                  cfg.deform_scale, metric, cfg.shooting(), cfg.seed);
    DatasetManifest m;
    m.templ = "template.vol";
    write_volume(out / m.templ, ds.templ);
    const int axis = parse_axis(cfg.slice_axis);
    for (const auto &s : ds.subjects) {
        ManifestEntry e;
        e.id = s.id;
        e.split = s.split;
        e.volume = "subjects/" + s.id + ".vol";
        e.slices = "subjects/" + s.id + "_slices.vol";
        e.v0 = "subjects/" + s.id + "_v0.vol";
        write_volume(out / e.volume, s.volume);
        write_slice_stack(out / e.slices, extract_slices(s.volume, axis, cfg.slice_count));
        write_vector_field(out / e.v0, s.v0);
        m.subjects.push_back(std::move(e));
    }
    write_manifest(out / "manifest.txt", m);
    write_text_file(out / "config.txt", format_config(cfg));
    log_line("synth: wrote " + std::to_string(ds.subjects.size()) + " subjects to " + out.string());
    return 0;
}

int cmd_atlas(const Common &common, const std::string &manifest, const std::string &split) {
    const RunConfig cfg = common.load();
    const fs::path out(common.out_dir);
    const auto subjects = load_subjects(manifest, split, cfg);
    const auto vols = volumes_of(subjects);
    const auto metric = build_metric(vols.front().grid, cfg.alpha, cfg.gamma, cfg.power);
    const AtlasState state = fit_atlas(vols, metric, cfg.atlas_config(), cfg.shooting());
    save_atlas_state(out / "atlas", state);
    write_text_file(out / "atlas_energy.log", energy_log(state.energy_trace));
    log_line("atlas: final energy " + std::to_string(state.energy_trace.back()));
    return 0;
}

int cmd_train(const Common &common, const std::string &manifest, const std::string &split,
              const std::string &atlas_dir) {
    const RunConfig cfg = common.load();
    const fs::path out(common.out_dir);
    const auto subjects = load_subjects(manifest, split, cfg);
    const auto vols = volumes_of(subjects);
    std::vector<SliceStack> stacks;
    for (const auto &s : subjects) stacks.push_back(s.slices);
    const auto metric = build_metric(vols.front().grid, cfg.alpha, cfg.gamma, cfg.power);
    const auto shoot_cfg = cfg.shooting();
    AtlasState state;
    if (!atlas_dir.empty()) {
        state = load_atlas_state(atlas_dir);
        if (state.velocities.size() != vols.size())
            throw UsageError("atlas checkpoint has " + std::to_string(state.velocities.size()) +
                             " subjects but the split has " + std::to_string(vols.size()));
    } else {
        state = fit_atlas(vols, metric, cfg.atlas_config(), shoot_cfg);
    }
    std::string loss_log;
    const auto result = train(vols, stacks, state, cfg.schedule(), metric, shoot_cfg, cfg.train_config(),
                              [&](const std::string &s) {
                                  loss_log += s + '\n';
                                  log_line("train: " + s);
                              });
    save_denoiser(out / "denoiser.tns", result.params);
    save_atlas_state(out / "atlas", state);
    write_text_file(out / "train_loss.log", loss_log);
    return 0;
}

void write_result(const fs::path &out, const std::string &id, const ReconstructionResult &r, bool error_map_flag,
                  const ScalarVolume *truth) {
    write_volume(out / (id + "_recon.vol"), r.volume);
    write_vector_field(out / (id + "_v0.vol"), r.v0);
    std::string rec = "seed=" + std::to_string(r.seed) + "\njacobian_positive=" +
                      (r.jacobian_positive ? "1" : "0") + "\n";
    if (r.metrics) rec = format_metric_record(*r.metrics, id) + rec;
    write_text_file(out / (id + "_metrics.txt"), rec);
    if (error_map_flag) {
        if (!truth) throw UsageError("--error-map needs a ground-truth volume");
        write_volume(out / (id + "_error.vol"), error_map(r.volume, *truth));
    }
}

struct ReconOptions {
    std::string method = "sadir";
    std::string model;
    std::string atlas;
    std::string manifest;
    std::string split = "test";
    std::string slices;
    std::string truth;
    std::string id = "subject";
    bool error_map = false;
};

int cmd_reconstruct(const Common &common, const ReconOptions &o) {
    const RunConfig cfg = common.load();
    const fs::path out(common.out_dir);
    if (o.method != "sadir" && o.method != "variational")
        throw UsageError("--method must be sadir or variational");
    if (o.atlas.empty()) throw UsageError("reconstruct needs --atlas");
    if (o.method == "sadir" && o.model.empty()) throw UsageError("--method sadir needs --model");
    if (o.manifest.empty() == o.slices.empty()) throw UsageError("give exactly one of --manifest or --slices");

    fs::path atlas_path(o.atlas);
    const ScalarVolume atlas =
        fs::is_directory(atlas_path) ? read_volume(atlas_path / "atlas.vol") : read_volume(atlas_path);
    const auto metric = build_metric(atlas.grid, cfg.alpha, cfg.gamma, cfg.power);
    const auto shoot_cfg = cfg.shooting();
    DenoiserParams params;
    if (o.method == "sadir") params = load_denoiser(o.model);
    const auto sched = cfg.schedule();

    std::vector<Subject> subjects;
    if (!o.manifest.empty()) {
        subjects = load_subjects(o.manifest, o.split, cfg);
    } else {
        Subject s;
        s.id = o.id;
        s.slices = read_slice_stack(o.slices);
        if (!o.truth.empty()) s.volume = read_volume(o.truth);
        subjects.push_back(std::move(s));
    }
    for (std::size_t k = 0; k < subjects.size(); ++k) {
        const auto &s = subjects[k];
        const ScalarVolume *truth = s.volume.data.empty() ? nullptr : &s.volume;
        const std::uint64_t seed = cfg.seed + k;
        ReconstructionResult r =
            o.method == "sadir"
                ? reconstruct(params, atlas, s.slices, sched, metric, shoot_cfg, seed, cfg.init_std, truth)
                : variational_reconstruct(atlas, s.slices, metric, shoot_cfg, cfg.variational_config(), truth);
        write_result(out, s.id, r, o.error_map, truth);
        std::string msg = "reconstruct: " + s.id;
        if (r.metrics) msg += " dsc " + std::to_string(r.metrics->dsc);
        log_line(msg);
    }
    return 0;
}

int cmd_eval(const Common &common, const std::vector<std::string> &inputs) {
    const fs::path out(common.out_dir);
    if (inputs.empty()) throw UsageError("eval needs at least one --input");
    std::vector<ModelRecords> rows;
    for (const auto &in : inputs) {
        ModelRecords row;
        fs::path dir(in);
        const auto eq = in.find('=');
        if (eq != std::string::npos) {
            row.model = in.substr(0, eq);
            dir = in.substr(eq + 1);
        } else {
            row.model = dir.filename().string();
        }
        if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto &e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.size() > 12 && name.ends_with("_metrics.txt")) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto &f : files) row.records.push_back(read_metric_record(f));
        if (row.records.empty()) throw UsageError("no *_metrics.txt records in " + dir.string());
        rows.push_back(std::move(row));
    }
    const auto table = format_aggregate_table(rows);
    write_text_file(out / "eval.md", table);
    std::cout << table;
    return 0;
}

int cmd_slices(const Common &common, const std::string &volume, const std::string &output) {
    const RunConfig cfg = common.load();
    const auto vol = read_volume(volume);
    const auto stack = extract_slices(vol, parse_axis(cfg.slice_axis), cfg.slice_count);
    const fs::path out = output.empty() ? fs::path(common.out_dir) / "slices.vol" : fs::path(output);
    write_slice_stack(out, stack);
    return 0;
}

} // namespace

int run_cli(int argc, char **argv) {
    CLI::App app{"Shape-aware diffusion reconstruction of 3D volumes from sparse slices"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--config", common.config_path, "key=value config file; flags override it");
    app.add_option("--out-dir", common.out_dir, "output directory");
    for (const auto &k : config_keys()) {
        auto *opt = app.add_option_function<std::string>(
            flag_name(k.name), [&common, name = k.name](const std::string &v) { common.overrides[name] = v; },
            k.help);
        opt->type_name("VALUE");
    }

    std::string manifest, split = "train", atlas_dir, volume, output;
    std::vector<std::string> inputs;
    ReconOptions ro;

    auto *synth = app.add_subcommand("synth", "generate a synthetic dataset and manifest");
    auto *atlas = app.add_subcommand("atlas", "build an atlas from a manifest split");
    atlas->add_option("--manifest", manifest, "dataset manifest")->required();
    atlas->add_option("--split", split, "train, val, test or all");
    auto *trn = app.add_subcommand("train", "jointly train the atlas and the denoiser");
    trn->add_option("--manifest", manifest, "dataset manifest")->required();
    trn->add_option("--split", split, "train, val, test or all");
    trn->add_option("--atlas", atlas_dir, "atlas checkpoint directory used as warm start");
    auto *rec = app.add_subcommand("reconstruct", "reconstruct volumes from slice stacks");
    rec->add_option("--method", ro.method, "sadir or variational");
    rec->add_option("--model", ro.model, "denoiser checkpoint");
    rec->add_option("--atlas", ro.atlas, "atlas volume or checkpoint directory")->required();
    rec->add_option("--manifest", ro.manifest, "reconstruct every subject of a split");
    rec->add_option("--split", ro.split, "split used with --manifest");
    rec->add_option("--slices", ro.slices, "single slice-stack file");
    rec->add_option("--truth", ro.truth, "ground-truth volume for --slices");
    rec->add_option("--id", ro.id, "output name for --slices");
    rec->add_flag("--error-map", ro.error_map, "also write |recon - truth|");
    auto *ev = app.add_subcommand("eval", "aggregate metric records into a table");
    ev->add_option("--input", inputs, "[label=]directory of *_metrics.txt records")->required();
    auto *sl = app.add_subcommand("slices", "extract a slice stack from a volume");
    sl->add_option("--volume", volume, "input volume")->required();
    sl->add_option("--output", output, "output slice-stack file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(common);
        if (atlas->parsed()) return cmd_atlas(common, manifest, split);
        if (trn->parsed()) return cmd_train(common, manifest, split, atlas_dir);
        if (rec->parsed()) return cmd_reconstruct(common, ro);
        if (ev->parsed()) return cmd_eval(common, inputs);
        if (sl->parsed()) return cmd_slices(common, volume, output);
    } catch (const UsageError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const ParameterError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

} // namespace sadir
