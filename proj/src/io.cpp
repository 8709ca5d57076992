#include "sadir/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <sstream>

#include "sadir/errors.hpp"

namespace sadir {

namespace {

constexpr char kVolMagic[8] = {'S', 'A', 'D', 'I', 'R', 'V', 'O', 'L'};
constexpr char kTnsMagic[8] = {'S', 'A', 'D', 'I', 'R', 'T', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void bytes(const void *p, std::size_t n) {
        const auto *c = static_cast<const unsigned char *>(p);
        buf.insert(buf.end(), c, c + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<unsigned char> buf;
};

class Reader {
public:
    Reader(const std::vector<unsigned char> &b, std::string what) : buf(b), what(std::move(what)) {}
    void need(std::size_t n, const char *field) const {
        if (pos + n > buf.size())
            throw FormatError(what + ": truncated at offset " + std::to_string(pos) + " reading " + field +
                              " (need " + std::to_string(pos + n) + " bytes, have " + std::to_string(buf.size()) +
                              ")");
    }
    std::uint32_t u32(const char *field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char *field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char *field) { return std::bit_cast<float>(u32(field)); }
    double f64(const char *field) { return std::bit_cast<double>(u64(field)); }
    void magic(const char (&m)[8]) {
        need(8, "magic");
        if (std::memcmp(buf.data() + pos, m, 8) != 0)
            throw FormatError(what + ": bad magic at offset 0 (expected " + std::string(m, 8) + ")");
        pos += 8;
    }
    [[noreturn]] void fail(std::size_t at, const std::string &msg) const {
        throw FormatError(what + ": " + msg + " at offset " + std::to_string(at));
    }
    const std::vector<unsigned char> &buf;
    std::string what;
    std::size_t pos = 0;
};

std::vector<unsigned char> read_bytes(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path &path, const std::vector<unsigned char> &bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::string &s, const std::string &what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception &) {
        throw FormatError(what + ": not a number: '" + s + "'");
    }
}

} // namespace

std::vector<unsigned char> encode_volume(const VolumeData &v, Dtype dtype) {
    v.grid.validate();
    if (v.channels < 1) throw ParameterError("volume needs at least one channel");
    if (v.data.size() != v.channels * v.grid.size())
        throw DimensionError("volume payload has " + std::to_string(v.data.size()) + " values, expected " +
                             std::to_string(v.channels * v.grid.size()));
    if (dtype != Dtype::F32 && dtype != Dtype::F64) throw ParameterError("unknown dtype");
    Writer w;
    w.bytes(kVolMagic, 8);
    w.u32(kVersion);
    for (int a = 0; a < 3; ++a) w.u32(static_cast<std::uint32_t>(v.grid.dims[a]));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(v.grid.spacing[a]));
    w.u32(v.channels);
    w.u32(static_cast<std::uint32_t>(dtype));
    w.buf.reserve(kVolumeHeaderSize + v.data.size() * (dtype == Dtype::F64 ? 8 : 4));
    for (double x : v.data) {
        if (dtype == Dtype::F64)
            w.f64(x);
        else
            w.f32(static_cast<float>(x));
    }
    return std::move(w.buf);
}

VolumeData decode_volume(const std::vector<unsigned char> &bytes, const std::string &what) {
    Reader r(bytes, what);
    r.magic(kVolMagic);
    const auto version = r.u32("version");
    if (version != kVersion) r.fail(8, "unsupported version " + std::to_string(version));
    std::array<std::uint32_t, 3> dims{};
    for (int a = 0; a < 3; ++a) dims[a] = r.u32("dims");
    std::array<double, 3> spacing{};
    for (int a = 0; a < 3; ++a) spacing[a] = r.f32("spacing");
    const auto channels = r.u32("channels");
    const auto dtype = r.u32("dtype");
    for (int a = 0; a < 3; ++a)
        if (dims[a] < 2 || dims[a] > (1u << 20)) r.fail(12 + 4 * a, "invalid dimension " + std::to_string(dims[a]));
    for (int a = 0; a < 3; ++a)
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) r.fail(24 + 4 * a, "invalid spacing");
    if (channels < 1 || channels > 64) r.fail(36, "invalid channel count " + std::to_string(channels));
    if (dtype != 1 && dtype != 2) r.fail(40, "unknown dtype " + std::to_string(dtype));

    VolumeData v;
    v.grid = GridSpec(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]), spacing);
    v.channels = channels;
    const std::uint64_t count = static_cast<std::uint64_t>(channels) * v.grid.size();
    const std::uint64_t width = dtype == 2 ? 8 : 4;
    const std::uint64_t expected = kVolumeHeaderSize + count * width;
    if (bytes.size() < expected)
        throw FormatError(what + ": truncated payload, expected " + std::to_string(expected) + " bytes but file has " +
                          std::to_string(bytes.size()) + " (payload starts at offset " +
                          std::to_string(kVolumeHeaderSize) + ")");
    if (bytes.size() > expected)
        throw FormatError(what + ": " + std::to_string(bytes.size() - expected) + " trailing bytes at offset " +
                          std::to_string(expected));
    v.data.resize(count);
    for (auto &x : v.data) x = dtype == 2 ? r.f64("payload") : static_cast<double>(r.f32("payload"));
    return v;
}

void write_volume_file(const fs::path &path, const VolumeData &v, Dtype dtype) {
    write_bytes(path, encode_volume(v, dtype));
}

VolumeData read_volume_file(const fs::path &path) { return decode_volume(read_bytes(path), path.string()); }

void write_volume(const fs::path &path, const ScalarVolume &vol, Dtype dtype) {
    write_volume_file(path, VolumeData{vol.grid, 1, vol.data}, dtype);
}

ScalarVolume read_volume(const fs::path &path) {
    auto v = read_volume_file(path);
    if (v.channels != 1)
        throw FormatError(path.string() + ": expected 1 channel, found " + std::to_string(v.channels) +
                          " at offset 36");
    ScalarVolume out;
    out.grid = v.grid;
    out.data = std::move(v.data);
    return out;
}

void write_vector_field(const fs::path &path, const VectorField &v, Dtype dtype) {
    write_volume_file(path, VolumeData{v.grid, 3, v.data}, dtype);
}

VectorField read_vector_field(const fs::path &path) {
    auto v = read_volume_file(path);
    if (v.channels != 3)
        throw FormatError(path.string() + ": expected 3 channels, found " + std::to_string(v.channels) +
                          " at offset 36");
    VectorField out;
    out.grid = v.grid;
    out.data = std::move(v.data);
    return out;
}

void write_slice_stack(const fs::path &path, const SliceStack &stack) {
    const auto emb = embed_slices(stack, stack.source_grid);
    VolumeData v{stack.source_grid, 2, emb.slices_embedded.data};
    v.data.insert(v.data.end(), emb.slice_mask.data.begin(), emb.slice_mask.data.end());
    write_volume_file(path, v);
}

SliceStack read_slice_stack(const fs::path &path) {
    auto v = read_volume_file(path);
    if (v.channels != 2)
        throw FormatError(path.string() + ": slice stack needs 2 channels, found " + std::to_string(v.channels) +
                          " at offset 36");
    const std::size_t n = v.grid.size();
    ScalarVolume emb(v.grid), mask(v.grid);
    std::copy(v.data.begin(), v.data.begin() + static_cast<std::ptrdiff_t>(n), emb.data.begin());
    std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(n), v.data.end(), mask.data.begin());
    for (std::size_t i = 0; i < n; ++i)
        if (mask.data[i] != 0.0 && mask.data[i] != 1.0)
            throw FormatError(path.string() + ": slice mask is not binary at offset " +
                              std::to_string(kVolumeHeaderSize + 8 * (n + i)));
    try {
        return stack_from_embedded(emb, mask);
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_tensors(const fs::path &path, const std::vector<Tensor> &tensors) {
    Writer w;
    w.bytes(kTnsMagic, 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto &t : tensors) {
        std::size_t count = 1;
        for (auto d : t.shape) count *= d;
        if (count != t.data.size()) throw DimensionError("tensor " + t.name + " shape does not match its data");
        w.u32(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u64(d);
        for (double x : t.data) w.f64(x);
    }
    write_bytes(path, w.buf);
}

std::vector<Tensor> read_tensors(const fs::path &path) {
    const auto bytes = read_bytes(path);
    Reader r(bytes, path.string());
    r.magic(kTnsMagic);
    const auto version = r.u32("version");
    if (version != kVersion) r.fail(8, "unsupported version " + std::to_string(version));
    const auto count = r.u32("tensor count");
    std::vector<Tensor> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        Tensor t;
        const auto name_len = r.u32("name length");
        if (name_len > 4096) r.fail(r.pos - 4, "implausible name length");
        r.need(name_len, "name");
        t.name.assign(reinterpret_cast<const char *>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const auto rank = r.u32("rank");
        if (rank > 8) r.fail(r.pos - 4, "implausible rank " + std::to_string(rank));
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto dim = r.u64("shape");
            if (dim > (1ull << 32)) r.fail(r.pos - 8, "implausible dimension");
            t.shape.push_back(static_cast<std::size_t>(dim));
            n *= dim;
        }
        if (n > (bytes.size() - r.pos) / 8) r.need(n * 8, "tensor data");
        t.data.resize(n);
        for (auto &x : t.data) x = r.f64("tensor data");
        out.push_back(std::move(t));
    }
    if (r.pos != bytes.size())
        throw FormatError(path.string() + ": " + std::to_string(bytes.size() - r.pos) + " trailing bytes at offset " +
                          std::to_string(r.pos));
    return out;
}

void save_denoiser(const fs::path &path, const DenoiserParams &params) {
    std::vector<Tensor> ts;
    const auto &c = params.config();
    ts.push_back(Tensor{"config",
                        {5},
                        {static_cast<double>(c.channels), static_cast<double>(c.blocks),
                         static_cast<double>(c.embed_dim), static_cast<double>(c.se_reduction), c.latent_scale}});
    for (const auto &t : params.tensors()) ts.push_back(t);
    write_tensors(path, ts);
}

DenoiserParams load_denoiser(const fs::path &path) {
    auto ts = read_tensors(path);
    if (ts.empty() || ts.front().name != "config" || ts.front().data.size() != 5)
        throw FormatError(path.string() + ": missing config tensor");
    const auto &c = ts.front().data;
    DenoiserConfig cfg{static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]),
                       static_cast<int>(c[3]), c[4]};
    ts.erase(ts.begin());
    try {
        return DenoiserParams::from_tensors(cfg, std::move(ts));
    } catch (const ParameterError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string format_manifest(const DatasetManifest &m) {
    std::ostringstream os;
    os << "version " << m.version << '\n';
    if (!m.templ.empty()) os << "template " << m.templ << '\n';
    for (const auto &s : m.subjects) {
        os << "subject id=" << s.id << " split=" << to_string(s.split) << " volume=" << s.volume;
        if (!s.slices.empty()) os << " slices=" << s.slices;
        if (!s.v0.empty()) os << " v0=" << s.v0;
        os << '\n';
    }
    return os.str();
}

DatasetManifest parse_manifest(const std::string &text, const std::string &what) {
    DatasetManifest m;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_version = false;
    auto fail = [&](const std::string &msg) {
        throw FormatError(what + ": line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "version") {
            if (!(ls >> m.version)) fail("bad version");
            if (m.version != 1) fail("unsupported version " + std::to_string(m.version));
            have_version = true;
        } else if (kind == "template") {
            if (!(ls >> m.templ)) fail("template needs a path");
        } else if (kind == "subject") {
            ManifestEntry e;
            bool has_split = false;
            std::string tok;
            while (ls >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
                const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "id")
                    e.id = val;
                else if (key == "split") {
                    try {
                        e.split = parse_split(val);
                    } catch (const ParameterError &err) {
                        fail(err.what());
                    }
                    has_split = true;
                } else if (key == "volume")
                    e.volume = val;
                else if (key == "slices")
                    e.slices = val;
                else if (key == "v0")
                    e.v0 = val;
                else
                    fail("unknown subject field '" + key + "'");
            }
            if (e.id.empty() || e.volume.empty() || !has_split) fail("subject needs id, split and volume");
            m.subjects.push_back(std::move(e));
        } else {
            fail("unknown record '" + kind + "'");
        }
    }
    if (!have_version) throw FormatError(what + ": missing version line");
    return m;
}

void write_manifest(const fs::path &path, const DatasetManifest &m) { write_text_file(path, format_manifest(m)); }

DatasetManifest read_manifest(const fs::path &path) { return parse_manifest(read_text_file(path), path.string()); }

fs::path resolve_relative(const fs::path &manifest_path, const std::string &rel) {
    const fs::path p(rel);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

void save_atlas_state(const fs::path &dir, const AtlasState &state) {
    fs::create_directories(dir);
    write_volume(dir / "atlas.vol", state.atlas);
    for (std::size_t n = 0; n < state.velocities.size(); ++n) {
        char name[48];
        std::snprintf(name, sizeof name, "velocity_%03zu.vol", n);
        write_vector_field(dir / name, state.velocities[n]);
    }
    std::ostringstream os;
    os << "sigma " << fmt_double(state.sigma) << '\n';
    os << "reg_weight " << fmt_double(state.reg_weight) << '\n';
    os << "subjects " << state.velocities.size() << '\n';
    os << "energy";
    for (double e : state.energy_trace) os << ' ' << fmt_double(e);
    os << '\n';
    write_text_file(dir / "atlas_meta.txt", os.str());
}

AtlasState load_atlas_state(const fs::path &dir) {
    AtlasState s;
    const auto meta_path = dir / "atlas_meta.txt";
    std::istringstream in(read_text_file(meta_path));
    std::string line;
    long subjects = -1;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key.empty()) continue;
        std::string val;
        if (key == "sigma") {
            ls >> val;
            s.sigma = parse_double(val, meta_path.string());
        } else if (key == "reg_weight") {
            ls >> val;
            s.reg_weight = parse_double(val, meta_path.string());
        } else if (key == "subjects") {
            if (!(ls >> subjects) || subjects < 0) throw FormatError(meta_path.string() + ": bad subject count");
        } else if (key == "energy") {
            while (ls >> val) s.energy_trace.push_back(parse_double(val, meta_path.string()));
        } else {
            throw FormatError(meta_path.string() + ": unknown key '" + key + "'");
        }
    }
    if (subjects < 0) throw FormatError(meta_path.string() + ": missing subject count");
    s.atlas = read_volume(dir / "atlas.vol");
    for (long n = 0; n < subjects; ++n) {
        char name[48];
        std::snprintf(name, sizeof name, "velocity_%03ld.vol", n);
        auto v = read_vector_field(dir / name);
        require_same_grid(v.grid, s.atlas.grid, "atlas checkpoint velocity");
        s.velocities.push_back(std::move(v));
    }
    return s;
}

std::string format_metric_record(const MetricRecord &r, const std::string &id) {
    std::ostringstream os;
    if (!id.empty()) os << "id=" << id << '\n';
    os << "dsc=" << fmt_double(r.dsc) << '\n';
    os << "jaccard=" << fmt_double(r.jaccard) << '\n';
    os << "rhd95=" << fmt_double(r.rhd95) << '\n';
    os << "mse=" << fmt_double(r.mse) << '\n';
    return os.str();
}

MetricRecord parse_metric_record(const std::string &text, const std::string &what) {
    std::map<std::string, double> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(what + ": expected key=value, got '" + line + "'");
        const auto key = line.substr(0, eq);
        if (key == "id" || key == "seed" || key == "jacobian_positive") continue;
        kv[key] = parse_double(line.substr(eq + 1), what);
    }
    MetricRecord r;
    for (auto [key, dst] : {std::pair{"dsc", &r.dsc}, std::pair{"jaccard", &r.jaccard},
                            std::pair{"rhd95", &r.rhd95}, std::pair{"mse", &r.mse}}) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(what + ": missing key '" + key + "'");
        *dst = it->second;
    }
    return r;
}

void write_metric_record(const fs::path &path, const MetricRecord &r, const std::string &id) {
    write_text_file(path, format_metric_record(r, id));
}

MetricRecord read_metric_record(const fs::path &path) {
    return parse_metric_record(read_text_file(path), path.string());
}

std::string format_aggregate_table(const std::vector<ModelRecords> &rows) {
    auto cell = [](const std::vector<MetricRecord> &recs, double MetricRecord::*field) {
        double mean = 0.0;
        for (const auto &r : recs) mean += r.*field;
        mean /= static_cast<double>(recs.size());
        double var = 0.0;
        for (const auto &r : recs) var += (r.*field - mean) * (r.*field - mean);
        var /= static_cast<double>(recs.size());
        char buf[64];
        // An infinite distance (empty reconstruction) leaves the spread undefined.
        if (std::isfinite(mean))
            std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, std::sqrt(var));
        else
            std::snprintf(buf, sizeof buf, "%.3f ± n/a", mean);
        return std::string(buf);
    };
    std::string out = "| Model | DSC | Jaccard | RHD95 |\n|---|---|---|---|\n";
    for (const auto &row : rows) {
        if (row.records.empty()) throw ParameterError("model '" + row.model + "' has no records");
        out += "| " + row.model + " | " + cell(row.records, &MetricRecord::dsc) + " | " +
               cell(row.records, &MetricRecord::jaccard) + " | " + cell(row.records, &MetricRecord::rhd95) + " |\n";
    }
    return out;
}

std::string read_text_file(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("write failed for " + path.string());
}

} // namespace sadir
