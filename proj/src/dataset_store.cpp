#include "recomp/dataset_store.hpp"

#include <zlib.h>

#include <bit>
#include <sstream>

#include "recomp/error.hpp"

namespace recomp {
namespace {

using Kind = DataError::Kind;

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f32_le(std::vector<std::uint8_t>& out, float v) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

float get_f32_le(const std::uint8_t* p) { return std::bit_cast<float>(get_u32_le(p)); }

Json stats_to_json(const NormStats& s) {
  return {{"K", s.K}, {"F", s.F}, {"min", s.min}, {"max", s.max}};
}

/// Reads and verifies one registered array file before anything decodes it.
std::vector<std::uint8_t> load_verified(const fs::path& dir, const DatasetManifest& m,
                                        const std::string& name, std::uint64_t record_bytes) {
  const FileEntry* entry = m.file(name);
  if (entry == nullptr) throw DataError(Kind::kFormat, "manifest has no registry entry for " + name);
  const std::uint64_t expected = record_bytes * static_cast<std::uint64_t>(m.sample_count);
  if (entry->bytes != expected)
    throw DataError(Kind::kLength, name + ": manifest registers " + std::to_string(entry->bytes) +
                                       " bytes but its shape fields imply " +
                                       std::to_string(expected));
  const fs::path path = dir / name;
  if (!fs::exists(path)) throw DataError(Kind::kMissingFile, name + ": file is missing");
  std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < entry->bytes)
    throw DataError(Kind::kChecksum, name + ": checksum mismatch (file truncated to " +
                                         std::to_string(bytes.size()) + " of " +
                                         std::to_string(entry->bytes) + " bytes)");
  if (bytes.size() > entry->bytes)
    throw DataError(Kind::kLength, name + ": file holds " + std::to_string(bytes.size()) +
                                       " bytes, manifest expects " + std::to_string(entry->bytes));
  if (crc32_of(bytes) != entry->crc32)
    throw DataError(Kind::kChecksum, name + ": checksum mismatch");
  return bytes;
}

void check_shapes(const DatasetManifest& m) {
  if (m.K < 1 || m.M < 1 || m.N < 1 || m.sample_count < 0)
    throw DataError(Kind::kFormat, "manifest: K, M, N must be positive");
}

}  // namespace

// ------------------------------------------------------------- manifest

const FileEntry* DatasetManifest::file(const std::string& name) const {
  for (const auto& f : files)
    if (f.name == name) return &f;
  return nullptr;
}

Json to_json(const SplitIndices& s) {
  return {{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

SplitIndices split_from_json(const Json& j) {
  SplitIndices split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train = j.at("train").get<std::vector<std::int64_t>>();
  split.val = j.at("val").get<std::vector<std::int64_t>>();
  split.test = j.at("test").get<std::vector<std::int64_t>>();
  return split;
}

Json to_json(const DatasetManifest& m) {
  Json j;
  j["schema_version"] = m.schema_version;
  j["K"] = m.K;
  j["M"] = m.M;
  j["N"] = m.N;
  j["S_cols"] = m.S_cols;
  j["image_height"] = m.image_height;
  j["image_width"] = m.image_width;
  j["has_bfm"] = m.has_bfm;
  j["has_images"] = m.has_images;
  j["sample_count"] = m.sample_count;
  j["generator_config_hash"] = m.generator_config_hash;
  j["seed"] = m.seed;
  j["generator_config"] = m.generator_config;
  j["split"] = m.split ? to_json(*m.split) : Json();
  j["norm_stats"] = m.norm_stats ? stats_to_json(*m.norm_stats) : Json();
  Json files = Json::array();
  for (const auto& f : m.files) files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"crc32", f.crc32}});
  j["files"] = files;
  return j;
}

DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion)
      throw DataError(Kind::kSchema, "manifest: unsupported schema version " +
                                         std::to_string(m.schema_version) + " (supported: " +
                                         std::to_string(kSchemaVersion) + ")");
    m.K = j.at("K").get<int>();
    m.M = j.at("M").get<int>();
    m.N = j.at("N").get<int>();
    m.S_cols = j.at("S_cols").get<int>();
    m.image_height = j.at("image_height").get<int>();
    m.image_width = j.at("image_width").get<int>();
    m.has_bfm = j.at("has_bfm").get<bool>();
    m.has_images = j.at("has_images").get<bool>();
    m.sample_count = j.at("sample_count").get<std::int64_t>();
    m.generator_config_hash = j.at("generator_config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.generator_config = j.at("generator_config");
    if (const Json& s = j.at("split"); !s.is_null()) {
      m.split = split_from_json(s);
    }
    if (const Json& s = j.at("norm_stats"); !s.is_null()) {
      NormStats stats;
      stats.K = s.at("K").get<int>();
      stats.F = s.at("F").get<int>();
      stats.min = s.at("min").get<std::vector<float>>();
      stats.max = s.at("max").get<std::vector<float>>();
      m.norm_stats = std::move(stats);
    }
    for (const Json& f : j.at("files"))
      m.files.push_back({f.at("name").get<std::string>(), f.at("bytes").get<std::uint64_t>(),
                         f.at("crc32").get<std::uint32_t>()});
  } catch (const Json::exception& e) {
    throw DataError(Kind::kFormat, std::string("manifest: ") + e.what());
  }
  check_shapes(m);
  return m;
}

// -------------------------------------------------------------- encoding

void append_complex64(std::vector<std::uint8_t>& out, cd value) {
  put_f32_le(out, static_cast<float>(value.real()));
  put_f32_le(out, static_cast<float>(value.imag()));
}

cd read_complex64(const std::uint8_t* bytes) {
  return {get_f32_le(bytes), get_f32_le(bytes + 4)};
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Kind::kMissingFile, path.filename().string() + ": cannot open");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(Kind::kMissingFile, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(Kind::kMissingFile, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---------------------------------------------------------------- writer

DatasetWriter::DatasetWriter(const fs::path& dir, DatasetManifest manifest)
    : dir_(dir), manifest_(std::move(manifest)) {
  check_shapes(manifest_);
  fs::create_directories(dir_);
  // Any previous manifest stops describing this directory from here on.
  fs::remove(dir_ / kManifestFile);
  const auto open = [&](Stream& s, const char* name) {
    s.name = name;
    s.crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    s.out.open(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!s.out) throw DataError(Kind::kMissingFile, std::string("cannot create ") + name);
  };
  open(csi_, kCsiFile);
  if (manifest_.has_bfm) open(bfm_, kBfmFile);
  if (manifest_.has_images) open(images_, kImagesFile);
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::write(Stream& s, std::span<const std::uint8_t> bytes) {
  s.out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!s.out) throw DataError(Kind::kMissingFile, "short write to " + s.name);
  s.crc = static_cast<std::uint32_t>(crc32(s.crc, bytes.data(), static_cast<uInt>(bytes.size())));
  s.bytes += bytes.size();
}

void DatasetWriter::append(const CsiSample& csi, const BfmSample* bfm, const Image* image) {
  const DatasetManifest& m = manifest_;
  if (csi.K != m.K || csi.N != m.N || csi.M != m.M)
    throw ShapeError("dataset writer: CSI sample shape differs from the manifest");
  std::vector<std::uint8_t> buf;
  buf.reserve(m.csi_record_bytes());
  for (const cd& v : csi.csi) append_complex64(buf, v);
  write(csi_, buf);

  if (m.has_bfm) {
    if (bfm == nullptr || bfm->K != m.K || bfm->M != m.M || bfm->S != m.S_cols)
      throw ShapeError("dataset writer: BFM sample missing or shaped differently from the manifest");
    buf.clear();
    for (const cd& v : bfm->bfm) append_complex64(buf, v);
    write(bfm_, buf);
  }
  if (m.has_images) {
    if (image == nullptr || image->height != m.image_height || image->width != m.image_width)
      throw ShapeError("dataset writer: image missing or sized differently from the manifest");
    write(images_, image->rgb);
  }
  ++written_;
}

DatasetManifest DatasetWriter::finish() {
  if (finished_) return manifest_;
  manifest_.sample_count = written_;
  manifest_.files.clear();
  for (Stream* s : {&csi_, &bfm_, &images_}) {
    if (!s->out.is_open()) continue;
    s->out.close();
    manifest_.files.push_back({s->name, s->bytes, s->crc});
  }
  write_manifest(dir_, manifest_);
  finished_ = true;
  return manifest_;
}

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
  write_text_atomic(dir / kManifestFile, to_json(manifest).dump(2) + "\n");
}

DatasetManifest write_dataset(const fs::path& dir, std::span<const ScenePair> pairs,
                              DatasetManifest manifest) {
  if (pairs.empty()) throw ConfigError("write_dataset: no samples");
  const ScenePair& first = pairs.front();
  manifest.K = first.csi.K;
  manifest.N = first.csi.N;
  manifest.M = first.csi.M;
  manifest.S_cols = std::min(first.csi.M, first.csi.N);
  manifest.image_height = first.state.image.height;
  manifest.image_width = first.state.image.width;
  manifest.has_bfm = true;
  manifest.has_images = true;
  DatasetWriter writer(dir, std::move(manifest));
  for (const ScenePair& p : pairs) {
    const BfmSample bfm = emulate_bfm(p.csi);
    writer.append(p.csi, &bfm, &p.state.image);
  }
  return writer.finish();
}

DatasetManifest write_dataset(const fs::path& dir, const Dataset& dataset) {
  DatasetWriter writer(dir, dataset.manifest);
  for (std::size_t i = 0; i < dataset.csi.size(); ++i)
    writer.append(dataset.csi[i], dataset.manifest.has_bfm ? &dataset.bfm[i] : nullptr,
                  dataset.manifest.has_images ? &dataset.images[i] : nullptr);
  return writer.finish();
}

// ---------------------------------------------------------------- reader

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  if (!fs::exists(path))
    throw DataError(Kind::kMissingFile, kManifestFile + std::string(": missing in ") + dir.string());
  const auto bytes = read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::exception& e) {
    throw DataError(Kind::kFormat, std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const DatasetManifest& m = ds.manifest;

  const auto csi_bytes = load_verified(dir, m, kCsiFile, m.csi_record_bytes());
  std::vector<std::uint8_t> bfm_bytes, image_bytes;
  if (m.has_bfm) bfm_bytes = load_verified(dir, m, kBfmFile, m.bfm_record_bytes());
  if (m.has_images) image_bytes = load_verified(dir, m, kImagesFile, m.image_record_bytes());

  const auto n = static_cast<std::size_t>(m.sample_count);
  ds.csi.reserve(n);
  const std::uint8_t* p = csi_bytes.data();
  for (std::size_t s = 0; s < n; ++s) {
    CsiSample c(static_cast<std::int64_t>(s), m.K, m.N, m.M);
    for (cd& v : c.csi) {
      v = read_complex64(p);
      p += 8;
    }
    ds.csi.push_back(std::move(c));
  }
  if (m.has_bfm) {
    p = bfm_bytes.data();
    for (std::size_t s = 0; s < n; ++s) {
      BfmSample b(static_cast<std::int64_t>(s), m.K, m.M, m.S_cols);
      for (cd& v : b.bfm) {
        v = read_complex64(p);
        p += 8;
      }
      ds.bfm.push_back(std::move(b));
    }
  }
  if (m.has_images) {
    const std::size_t rec = m.image_record_bytes();
    for (std::size_t s = 0; s < n; ++s) {
      Image img{m.image_height, m.image_width, {}};
      img.rgb.assign(image_bytes.begin() + static_cast<std::ptrdiff_t>(s * rec),
                     image_bytes.begin() + static_cast<std::ptrdiff_t>((s + 1) * rec));
      ds.images.push_back(std::move(img));
    }
  }
  return ds;
}

DatasetManifest import_external_csi(const fs::path& csi_file, const Json& stub,
                                    const fs::path& out_dir) {
  DatasetManifest m;
  try {
    m.K = stub.at("K").get<int>();
    m.N = stub.at("N").get<int>();
    m.M = stub.at("M").get<int>();
    m.sample_count = stub.at("sample_count").get<std::int64_t>();
    m.seed = stub.value("seed", std::uint64_t{0});
  } catch (const Json::exception& e) {
    throw DataError(Kind::kFormat, std::string("import stub: ") + e.what());
  }
  check_shapes(m);
  m.S_cols = std::min(m.M, m.N);
  m.has_bfm = false;
  m.has_images = false;
  m.generator_config = nullptr;
  m.generator_config_hash = "external";

  if (!fs::exists(csi_file))
    throw DataError(Kind::kMissingFile, csi_file.filename().string() + ": file is missing");
  const auto bytes = read_file(csi_file);
  const std::uint64_t expected = m.csi_record_bytes() * static_cast<std::uint64_t>(m.sample_count);
  if (bytes.size() != expected)
    throw DataError(Kind::kLength, csi_file.filename().string() + ": " +
                                       std::to_string(bytes.size()) + " bytes, declared shape needs " +
                                       std::to_string(expected));

  fs::create_directories(out_dir);
  fs::remove(out_dir / kManifestFile);
  write_file_atomic(out_dir / kCsiFile, bytes);
  m.files = {{kCsiFile, bytes.size(), crc32_of(bytes)}};
  write_manifest(out_dir, m);
  return m;
}

DatasetManifest add_emulated_bfm(const fs::path& dir) {
  Dataset ds = read_dataset(dir);
  DatasetManifest m = ds.manifest;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(m.bfm_record_bytes() * static_cast<std::uint64_t>(m.sample_count));
  for (const CsiSample& c : ds.csi)
    for (const cd& v : emulate_bfm(c).bfm) append_complex64(bytes, v);
  write_file_atomic(dir / kBfmFile, bytes);
  std::erase_if(m.files, [](const FileEntry& f) { return f.name == kBfmFile; });
  m.files.push_back({kBfmFile, bytes.size(), crc32_of(bytes)});
  m.has_bfm = true;
  write_manifest(dir, m);
  return m;
}

// ------------------------------------------------------------ checkpoints

namespace {

Json layer_to_json(const LayerSpec& l) {
  return {{"kind", to_string(l.kind)},
          {"kernel", {l.kernel_h, l.kernel_w}},
          {"in_channels", l.in_channels},
          {"channels", l.channels},
          {"padding", l.padding == Padding::kSame ? "same" : "none"},
          {"activation", l.activation == Activation::kRelu ? "relu" : "linear"},
          {"out", {l.out_h, l.out_w}}};
}

LayerSpec layer_from_json(const Json& j) {
  static const std::pair<const char*, LayerKind> kinds[] = {
      {"conv2d", LayerKind::kConv2d},       {"maxpool2d", LayerKind::kMaxPool2d},
      {"batchnorm", LayerKind::kBatchNorm}, {"upsample2d", LayerKind::kUpsample2d},
      {"resize", LayerKind::kResize},       {"concat", LayerKind::kConcat},
      {"linear", LayerKind::kLinear}};
  LayerSpec l;
  const auto kind = j.at("kind").get<std::string>();
  bool found = false;
  for (const auto& [name, k] : kinds)
    if (kind == name) {
      l.kind = k;
      found = true;
    }
  if (!found) throw DataError(Kind::kFormat, "checkpoint: unknown layer kind " + kind);
  l.kernel_h = j.at("kernel").at(0).get<int>();
  l.kernel_w = j.at("kernel").at(1).get<int>();
  l.in_channels = j.at("in_channels").get<int>();
  l.channels = j.at("channels").get<int>();
  l.padding = j.at("padding").get<std::string>() == "same" ? Padding::kSame : Padding::kNone;
  l.activation = j.at("activation").get<std::string>() == "relu" ? Activation::kRelu
                                                                   : Activation::kLinear;
  l.out_h = j.at("out").at(0).get<int>();
  l.out_w = j.at("out").at(1).get<int>();
  return l;
}

Json layers_to_json(const std::vector<LayerSpec>& layers) {
  Json a = Json::array();
  for (const auto& l : layers) a.push_back(layer_to_json(l));
  return a;
}

std::vector<LayerSpec> layers_from_json(const Json& a) {
  std::vector<LayerSpec> out;
  for (const auto& l : a) out.push_back(layer_from_json(l));
  return out;
}

}  // namespace

Json to_json(const ModelSpec& spec) {
  return {{"kind", cli_name(spec.kind)},
          {"dims",
           {{"K", spec.dims.K}, {"F_b", spec.dims.F_b}, {"F_h", spec.dims.F_h}, {"h", spec.dims.h},
            {"w", spec.dims.w}}},
          {"parameter_count", count_params(spec)},
          {"bfm_encoder", layers_to_json(spec.bfm_encoder)},
          {"image_encoder", layers_to_json(spec.image_encoder)},
          {"decoder", layers_to_json(spec.decoder)}};
}

ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec spec;
  try {
    spec.kind = parse_model_kind(j.at("kind").get<std::string>());
    const Json& d = j.at("dims");
    spec.dims = {d.at("K").get<int>(), d.at("F_b").get<int>(), d.at("F_h").get<int>(),
                 d.at("h").get<int>(), d.at("w").get<int>()};
    spec.bfm_encoder = layers_from_json(j.at("bfm_encoder"));
    spec.image_encoder = layers_from_json(j.at("image_encoder"));
    spec.decoder = layers_from_json(j.at("decoder"));
  } catch (const Json::exception& e) {
    throw DataError(Kind::kFormat, std::string("model spec: ") + e.what());
  }
  return spec;
}

void write_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  std::vector<std::uint8_t> blob;
  Json entries = Json::array();
  for (const auto& e : ckpt.params.entries) {
    for (float v : e.value) put_f32_le(blob, v);
    entries.push_back({{"name", e.name}, {"size", e.value.size()}, {"trainable", e.trainable}});
  }
  write_file_atomic(dir / kCheckpointBlob, blob);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["spec"] = to_json(ckpt.spec);
  j["seed"] = ckpt.params.seed;
  j["epoch"] = ckpt.epoch;
  j["metrics"] = ckpt.metrics;
  j["entries"] = entries;
  j["blob"] = {{"name", kCheckpointBlob}, {"bytes", blob.size()}, {"crc32", crc32_of(blob)}};
  write_text_atomic(dir / kCheckpointManifest, j.dump(2) + "\n");
}

Checkpoint read_checkpoint(const fs::path& dir) {
  const fs::path manifest = dir / kCheckpointManifest;
  if (!fs::exists(manifest))
    throw DataError(Kind::kMissingFile, std::string(kCheckpointManifest) + ": missing in " + dir.string());
  const auto text = read_file(manifest);
  Checkpoint ckpt;
  try {
    const Json j = Json::parse(text.begin(), text.end());
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw DataError(Kind::kSchema, "checkpoint: unsupported schema version");
    ckpt.spec = model_spec_from_json(j.at("spec"));
    ckpt.params.seed = j.at("seed").get<std::uint64_t>();
    ckpt.epoch = j.at("epoch").get<int>();
    ckpt.metrics = j.at("metrics");
    const auto expected_bytes = j.at("blob").at("bytes").get<std::uint64_t>();
    const auto expected_crc = j.at("blob").at("crc32").get<std::uint32_t>();
    if (!fs::exists(dir / kCheckpointBlob))
      throw DataError(Kind::kMissingFile, std::string(kCheckpointBlob) + ": file is missing");
    const auto blob = read_file(dir / kCheckpointBlob);
    if (blob.size() < expected_bytes)
      throw DataError(Kind::kChecksum, std::string(kCheckpointBlob) + ": checksum mismatch (truncated)");
    if (blob.size() != expected_bytes)
      throw DataError(Kind::kLength, std::string(kCheckpointBlob) + ": unexpected length");
    if (crc32_of(blob) != expected_crc)
      throw DataError(Kind::kChecksum, std::string(kCheckpointBlob) + ": checksum mismatch");
    std::size_t off = 0;
    for (const Json& e : j.at("entries")) {
      ModelParams::Entry entry;
      entry.name = e.at("name").get<std::string>();
      entry.trainable = e.at("trainable").get<bool>();
      const auto size = e.at("size").get<std::size_t>();
      if (off + size * 4 > blob.size())
        throw DataError(Kind::kLength, "checkpoint: entries exceed the weight blob");
      entry.value.resize(size);
      for (std::size_t i = 0; i < size; ++i, off += 4) entry.value[i] = get_f32_le(&blob[off]);
      ckpt.params.entries.push_back(std::move(entry));
    }
    if (off != blob.size()) throw DataError(Kind::kLength, "checkpoint: trailing bytes in weight blob");
  } catch (const Json::exception& e) {
    throw DataError(Kind::kFormat, std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

}  // namespace recomp
