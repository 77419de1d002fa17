#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recomp/bfm_core.hpp"
#include "recomp/config_io.hpp"
#include "recomp/model_zoo.hpp"
#include "recomp/preprocess.hpp"
#include "recomp/sim_scene.hpp"

namespace recomp {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kCsiFile = "csi.bin";
inline constexpr const char* kBfmFile = "bfm.bin";
inline constexpr const char* kImagesFile = "images.bin";

struct SplitIndices {
  std::uint64_t seed = 0;
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> val;
  std::vector<std::int64_t> test;
  bool operator==(const SplitIndices&) const = default;
};

Json to_json(const SplitIndices& s);
/// Throws Json::exception on missing fields.
SplitIndices split_from_json(const Json& j);

struct FileEntry {
  std::string name;
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;
  bool operator==(const FileEntry&) const = default;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  int K = 0;
  int M = 0;
  int N = 0;
  int S_cols = 0;
  int image_height = 0;
  int image_width = 0;
  bool has_bfm = false;
  bool has_images = false;
  std::int64_t sample_count = 0;
  std::string generator_config_hash;
  std::uint64_t seed = 0;
  Json generator_config;  // resolved scene config, null for imported data
  std::optional<SplitIndices> split;
  std::optional<NormStats> norm_stats;
  std::vector<FileEntry> files;

  std::uint64_t csi_record_bytes() const { return 8ull * K * N * M; }
  std::uint64_t bfm_record_bytes() const { return 8ull * K * M * S_cols; }
  std::uint64_t image_record_bytes() const { return 3ull * image_height * image_width; }
  const FileEntry* file(const std::string& name) const;
};

Json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const Json& j);

struct Dataset {
  DatasetManifest manifest;
  std::vector<CsiSample> csi;
  std::vector<BfmSample> bfm;  // empty when manifest.has_bfm is false
  std::vector<Image> images;   // empty when manifest.has_images is false
};

/// complex64 little-endian: interleaved real/imag IEEE-754 binary32.
void append_complex64(std::vector<std::uint8_t>& out, cd value);
cd read_complex64(const std::uint8_t* bytes);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

/// Streams samples into a dataset directory. The manifest is written by
/// finish(); a directory without a manifest is not a dataset.
class DatasetWriter {
 public:
  DatasetWriter(const fs::path& dir, DatasetManifest manifest);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const CsiSample& csi, const BfmSample* bfm, const Image* image);
  DatasetManifest finish();

 private:
  struct Stream {
    std::string name;
    std::ofstream out;
    std::uint64_t bytes = 0;
    std::uint32_t crc = 0;
  };
  void write(Stream& s, std::span<const std::uint8_t> bytes);

  fs::path dir_;
  DatasetManifest manifest_;
  Stream csi_, bfm_, images_;
  std::int64_t written_ = 0;
  bool finished_ = false;
};

/// Writes `pairs` with emulated BFMs. `manifest` supplies provenance
/// (generator config, seed); shapes and the file registry are filled in.
DatasetManifest write_dataset(const fs::path& dir, std::span<const ScenePair> pairs,
                              DatasetManifest manifest);
DatasetManifest write_dataset(const fs::path& dir, const Dataset& dataset);

DatasetManifest read_manifest(const fs::path& dir);
Dataset read_dataset(const fs::path& dir);

/// Rewrites only the manifest (atomically via rename).
void write_manifest(const fs::path& dir, const DatasetManifest& manifest);

/// Imports a raw csi.bin ([sample][k][n][m] complex64) described by a stub
/// manifest holding K, N, M and sample_count. The result has no BFM or images.
DatasetManifest import_external_csi(const fs::path& csi_file, const Json& stub,
                                    const fs::path& out_dir);

/// Computes bfm.bin for a dataset that lacks it and registers it.
DatasetManifest add_emulated_bfm(const fs::path& dir);

// ------------------------------------------------------------ checkpoints

inline constexpr const char* kCheckpointManifest = "checkpoint.json";
inline constexpr const char* kCheckpointBlob = "weights.bin";

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);

struct Checkpoint {
  ModelSpec spec;
  ModelParams params;
  int epoch = 0;
  Json metrics = Json::object();
};

/// weights.bin holds every entry of params as float32 little-endian, in entry order.
void write_checkpoint(const fs::path& dir, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const fs::path& dir);

/// Byte-exact file helpers.
std::vector<std::uint8_t> read_file(const fs::path& path);
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const fs::path& path, const std::string& text);

}  // namespace recomp
