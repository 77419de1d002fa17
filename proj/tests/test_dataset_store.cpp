#include <cstring>
#include <fstream>

#include "doctest.h"
#include "generators.hpp"
#include "recomp/dataset_store.hpp"
#include "recomp/error.hpp"

using namespace recomp;

namespace {

cd as_complex64(cd v) {
  const float re = static_cast<float>(v.real());
  const float im = static_cast<float>(v.imag());
  return cd(re, im);
}

SceneConfig small_scene() {
  SceneConfig c;
  c.K = 8;
  c.image_height = 24;
  c.image_width = 32;
  return c;
}

DataError::Kind read_error_kind(const fs::path& dir) {
  try {
    read_dataset(dir);
  } catch (const DataError& e) {
    return e.kind();
  }
  FAIL("expected DataError");
  return DataError::Kind::kFormat;
}

void truncate_file(const fs::path& p, std::uintmax_t bytes) { fs::resize_file(p, bytes); }

}  // namespace

TEST_CASE("complex64 is interleaved little-endian binary32") {
  std::vector<std::uint8_t> out;
  append_complex64(out, cd(1.0, 2.0));
  CHECK(out == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40});
  CHECK(read_complex64(out.data()) == cd(1.0, 2.0));

  out.clear();
  append_complex64(out, cd(-0.5, 0.0));
  CHECK(out == std::vector<std::uint8_t>{0x00, 0x00, 0x00, 0xBF, 0x00, 0x00, 0x00, 0x00});
}

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32_of({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("datasets round-trip at complex64 precision") {
  testgen::TempDir tmp("ds");
  const SceneConfig c = small_scene();
  const auto pairs = generate_dataset(c, 12);
  DatasetManifest prov;
  prov.seed = c.rng_seed;
  prov.generator_config = to_json(c);
  const DatasetManifest written = write_dataset(tmp.path(), pairs, prov);
  CHECK(written.sample_count == 12);
  CHECK(written.S_cols == 3);
  CHECK(written.has_bfm);
  CHECK(written.has_images);

  const Dataset ds = read_dataset(tmp.path());
  CHECK(ds.manifest.K == 8);
  CHECK(ds.manifest.N == c.N);
  CHECK(ds.manifest.M == c.M);
  CHECK(ds.manifest.files == written.files);
  REQUIRE(ds.csi.size() == 12);
  REQUIRE(ds.bfm.size() == 12);
  REQUIRE(ds.images.size() == 12);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < pairs[i].csi.csi.size(); ++j)
      CHECK(ds.csi[i].csi[j] == as_complex64(pairs[i].csi.csi[j]));
    CHECK(ds.images[i] == pairs[i].state.image);
    const BfmSample bfm = emulate_bfm(pairs[i].csi);
    for (std::size_t j = 0; j < bfm.bfm.size(); ++j) CHECK(ds.bfm[i].bfm[j] == as_complex64(bfm.bfm[j]));
  }

  // Manifest fields survive a JSON round trip.
  CHECK(to_json(manifest_from_json(to_json(ds.manifest))) == to_json(ds.manifest));
}

TEST_CASE("split and norm stats persist in the manifest") {
  testgen::TempDir tmp("manifest");
  write_dataset(tmp.path(), generate_dataset(small_scene(), 10), DatasetManifest{});
  DatasetManifest m = read_manifest(tmp.path());
  CHECK_FALSE(m.split.has_value());
  SplitIndices s;
  s.seed = 4;
  s.train = {0, 1, 2, 3, 4, 5, 6};
  s.val = {7, 8};
  s.test = {9};
  m.split = s;
  m.norm_stats = NormStats{};
  m.norm_stats->K = 1;
  m.norm_stats->F = 2;
  m.norm_stats->min = {0.0f, 1.0f};
  m.norm_stats->max = {1.0f, 3.0f};
  write_manifest(tmp.path(), m);
  const DatasetManifest back = read_manifest(tmp.path());
  REQUIRE(back.split.has_value());
  CHECK(*back.split == s);
  REQUIRE(back.norm_stats.has_value());
  CHECK(*back.norm_stats == *m.norm_stats);
  CHECK(split_from_json(to_json(s)) == s);
}

TEST_CASE("a truncated array file fails its checksum") {
  testgen::TempDir tmp("trunc");
  const auto m = write_dataset(tmp.path(), generate_dataset(small_scene(), 6), DatasetManifest{});
  truncate_file(tmp.path() / kCsiFile, m.file(kCsiFile)->bytes - 8);
  CHECK(read_error_kind(tmp.path()) == DataError::Kind::kChecksum);
}

TEST_CASE("a flipped byte fails the checksum") {
  testgen::TempDir tmp("flip");
  write_dataset(tmp.path(), generate_dataset(small_scene(), 6), DatasetManifest{});
  std::fstream f(tmp.path() / kBfmFile, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(17);
  f.put('\x7f');
  f.close();
  CHECK(read_error_kind(tmp.path()) == DataError::Kind::kChecksum);
}

TEST_CASE("array sizes that disagree with the declared shape are length errors") {
  testgen::TempDir small("len-a");
  testgen::TempDir large("len-b");
  SceneConfig c = small_scene();
  write_dataset(small.path(), generate_dataset(c, 4), DatasetManifest{});
  c.K = 32;
  write_dataset(large.path(), generate_dataset(c, 4), DatasetManifest{});

  // A csi.bin written for K = 32 dropped into a K = 8 dataset.
  fs::copy_file(large.path() / kCsiFile, small.path() / kCsiFile, fs::copy_options::overwrite_existing);
  CHECK(read_error_kind(small.path()) == DataError::Kind::kLength);

  // A manifest claiming a larger K than its registered byte counts.
  testgen::TempDir other("len-c");
  write_dataset(other.path(), generate_dataset(small_scene(), 4), DatasetManifest{});
  DatasetManifest m = read_manifest(other.path());
  m.K = 32;
  write_manifest(other.path(), m);
  CHECK(read_error_kind(other.path()) == DataError::Kind::kLength);
}

TEST_CASE("missing files and unsupported schema versions are reported as such") {
  testgen::TempDir tmp("missing");
  write_dataset(tmp.path(), generate_dataset(small_scene(), 4), DatasetManifest{});
  fs::remove(tmp.path() / kImagesFile);
  CHECK(read_error_kind(tmp.path()) == DataError::Kind::kMissingFile);

  testgen::TempDir empty("empty");
  CHECK(read_error_kind(empty.path()) == DataError::Kind::kMissingFile);

  testgen::TempDir schema("schema");
  write_dataset(schema.path(), generate_dataset(small_scene(), 4), DatasetManifest{});
  Json j = to_json(read_manifest(schema.path()));
  j["schema_version"] = kSchemaVersion + 1;
  write_text_atomic(schema.path() / kManifestFile, j.dump());
  CHECK(read_error_kind(schema.path()) == DataError::Kind::kSchema);
}

TEST_CASE("external CSI import keeps the samples and adds BFM on request") {
  testgen::TempDir tmp("import");
  std::mt19937_64 rng(5);
  const int K = 8, N = 4, M = 3, n = 5;
  std::vector<CsiSample> samples;
  std::vector<std::uint8_t> raw;
  for (int i = 0; i < n; ++i) {
    samples.push_back(testgen::random_csi(rng, K, N, M));
    for (cd v : samples.back().csi) append_complex64(raw, v);
  }
  write_file_atomic(tmp.path() / "raw.bin", raw);
  const Json stub = {{"K", K}, {"N", N}, {"M", M}, {"sample_count", n}};
  const fs::path out = tmp.path() / "ds";
  const DatasetManifest m = import_external_csi(tmp.path() / "raw.bin", stub, out);
  CHECK_FALSE(m.has_bfm);
  CHECK_FALSE(m.has_images);

  Dataset ds = read_dataset(out);
  REQUIRE(ds.csi.size() == static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ds.csi[i].csi.size(); ++j)
      CHECK(ds.csi[i].csi[j] == as_complex64(samples[i].csi[j]));
  CHECK(ds.bfm.empty());

  add_emulated_bfm(out);
  ds = read_dataset(out);
  CHECK(ds.manifest.has_bfm);
  REQUIRE(ds.bfm.size() == static_cast<std::size_t>(n));
  const BfmSample want = emulate_bfm(ds.csi[2]);
  for (std::size_t j = 0; j < want.bfm.size(); ++j) CHECK(ds.bfm[2].bfm[j] == as_complex64(want.bfm[j]));

  const Json wrong = {{"K", K + 1}, {"N", N}, {"M", M}, {"sample_count", n}};
  try {
    import_external_csi(tmp.path() / "raw.bin", wrong, tmp.path() / "bad");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::kLength);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  testgen::TempDir tmp("ckpt");
  const ModelDims d{16, 9, 12, 32, 32};
  Model<float> model(build_model(ModelKind::kMmi, d), 3);
  Checkpoint c;
  c.spec = model.spec();
  c.params = model.params();
  c.epoch = 7;
  c.metrics = {{"val_loss", 0.25}};
  write_checkpoint(tmp.path(), c);
  const Checkpoint back = read_checkpoint(tmp.path());
  CHECK(back.params == c.params);
  CHECK(back.epoch == 7);
  CHECK(back.metrics == c.metrics);
  CHECK(to_json(back.spec) == to_json(c.spec));

  Model<float> restored(back.spec, 99);
  restored.load_params(back.params);
  CHECK(restored.params() == model.params());

  truncate_file(tmp.path() / kCheckpointBlob, 100);
  try {
    read_checkpoint(tmp.path());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::kChecksum);
  }
}
