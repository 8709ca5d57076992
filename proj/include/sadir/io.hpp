#pragma once

// On-disk formats: the SADIRVOL volume container, tensor archives for network
// weights, dataset manifests, atlas checkpoints and metric records.
//
// VolumeFile layout (all little-endian):
//   0   "SADIRVOL"
//   8   u32 version (1)
//   12  u32 nx, ny, nz
//   24  f32 spacing x, y, z
//   36  u32 channels
//   40  u32 dtype (1 = f32, 2 = f64)
//   44  payload, channel-major, x-fastest

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sadir/atlas.hpp"
#include "sadir/denoiser.hpp"
#include "sadir/grid.hpp"
#include "sadir/metrics.hpp"
#include "sadir/synth.hpp"

namespace sadir {

namespace fs = std::filesystem;

enum class Dtype : std::uint32_t { F32 = 1, F64 = 2 };

inline constexpr std::size_t kVolumeHeaderSize = 44;

struct VolumeData {
    GridSpec grid;
    std::uint32_t channels = 1;
    std::vector<double> data;
};

std::vector<unsigned char> encode_volume(const VolumeData &v, Dtype dtype = Dtype::F64);
// Throws FormatError naming the offending byte offset.
VolumeData decode_volume(const std::vector<unsigned char> &bytes, const std::string &what = "volume");

void write_volume_file(const fs::path &path, const VolumeData &v, Dtype dtype = Dtype::F64);
VolumeData read_volume_file(const fs::path &path);

void write_volume(const fs::path &path, const ScalarVolume &vol, Dtype dtype = Dtype::F64);
ScalarVolume read_volume(const fs::path &path);
void write_vector_field(const fs::path &path, const VectorField &v, Dtype dtype = Dtype::F64);
VectorField read_vector_field(const fs::path &path);

// Two channels: embedded slices and the plane mask.
void write_slice_stack(const fs::path &path, const SliceStack &stack);
SliceStack read_slice_stack(const fs::path &path);

// "SADIRTNS", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data.
void write_tensors(const fs::path &path, const std::vector<Tensor> &tensors);
std::vector<Tensor> read_tensors(const fs::path &path);

// Weights plus a "config" tensor holding {C, R, E, r}.
void save_denoiser(const fs::path &path, const DenoiserParams &params);
DenoiserParams load_denoiser(const fs::path &path);

struct ManifestEntry {
    std::string id;
    Split split = Split::Train;
    std::string volume;
    std::string slices; // optional, empty when absent
    std::string v0;     // optional
};

struct DatasetManifest {
    int version = 1;
    std::string templ; // optional
    std::vector<ManifestEntry> subjects;
};

// Text format, one record per line:
//   version 1
//   template <path>
//   subject id=<id> split=<split> volume=<path> [slices=<path>] [v0=<path>]
// Paths are relative to the manifest's directory.
std::string format_manifest(const DatasetManifest &m);
DatasetManifest parse_manifest(const std::string &text, const std::string &what = "manifest");
void write_manifest(const fs::path &path, const DatasetManifest &m);
DatasetManifest read_manifest(const fs::path &path);
fs::path resolve_relative(const fs::path &manifest_path, const std::string &rel);

// Directory with atlas.vol, velocity_NNN.vol and atlas_meta.txt.
void save_atlas_state(const fs::path &dir, const AtlasState &state);
AtlasState load_atlas_state(const fs::path &dir);

std::string format_metric_record(const MetricRecord &r, const std::string &id = {});
MetricRecord parse_metric_record(const std::string &text, const std::string &what = "metric record");
void write_metric_record(const fs::path &path, const MetricRecord &r, const std::string &id = {});
MetricRecord read_metric_record(const fs::path &path);

struct ModelRecords {
    std::string model;
    std::vector<MetricRecord> records;
};

// Markdown table "| Model | DSC | Jaccard | RHD95 |" with mean ± std
// (population std) per column, three decimals.
std::string format_aggregate_table(const std::vector<ModelRecords> &rows);

std::string read_text_file(const fs::path &path);
void write_text_file(const fs::path &path, const std::string &text);

} // namespace sadir
