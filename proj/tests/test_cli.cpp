#include <fstream>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "recomp/cli.hpp"
#include "recomp/dataset_store.hpp"

using namespace recomp;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "recomp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int simulate_small(const fs::path& out, int samples = 40) {
  return cli({"simulate", "--samples", std::to_string(samples), "--out", out.string(), "--set", "K=16",
              "--set", "image_height=32", "--set", "image_width=32"});
}

std::vector<std::string> quick_train(const fs::path& ds, const fs::path& out, const std::string& models,
                                     const std::string& seeds) {
  return {"train",  "--dataset", ds.string(),        "--model", models,
          "--seeds", seeds,      "--out",            out.string(),
          "--set",  "max_epochs=2", "--set",          "patience=2",
          "--set",  "batch_size=8", "--set",          "image_h=16",
          "--set",  "image_w=16"};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}) == kExitUsage);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  CHECK(cli({"simulate", "--out", "x"}) == kExitUsage);  // --samples missing
  testgen::TempDir tmp("cli-usage");
  CHECK(cli({"simulate", "--samples", "4", "--out", (tmp.path() / "d").string(), "--set", "bogus=1"}) ==
        kExitUsage);
  CHECK(cli({"simulate", "--samples", "0", "--out", (tmp.path() / "d").string()}) == kExitUsage);
}

TEST_CASE("data errors exit with 2") {
  testgen::TempDir tmp("cli-data");
  CHECK(cli({"train", "--dataset", (tmp.path() / "none").string(), "--model", "mmi", "--out",
             (tmp.path() / "runs").string()}) == kExitData);
  CHECK(cli({"report", "--runs", tmp.path().string()}) == kExitData);

  // Image models on an imported dataset without images.
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> raw;
  for (int i = 0; i < 20; ++i)
    for (cd v : testgen::random_csi(rng, 8, 4, 3).csi) append_complex64(raw, v);
  write_file_atomic(tmp.path() / "raw.bin", raw);
  const fs::path ds = tmp.path() / "imported";
  CHECK(cli({"import", "--csi", (tmp.path() / "raw.bin").string(), "--K", "8", "--N", "4", "--M", "3",
             "--samples", "20", "--out", ds.string()}) == kExitOk);
  CHECK(cli(quick_train(ds, tmp.path() / "runs", "mmi", "1")) == kExitData);

  // Declared shape that does not match the file.
  CHECK(cli({"import", "--csi", (tmp.path() / "raw.bin").string(), "--K", "16", "--N", "4", "--M", "3",
             "--samples", "20", "--out", (tmp.path() / "bad").string()}) == kExitData);
}

TEST_CASE("a diverging run exits with 3 and leaves the others intact") {
  testgen::TempDir tmp("cli-diverge");
  const fs::path ds = tmp.path() / "ds";
  REQUIRE(simulate_small(ds, 30) == kExitOk);
  auto args = quick_train(ds, tmp.path() / "runs", "smi-bfm", "1");
  args.insert(args.end(), {"--set", "learning_rate=1e30"});
  CHECK(cli(args) == kExitRunFailure);
  const Json run = read_json(tmp.path() / "runs" / run_dir_name(ModelKind::kSmiBfm, 1) / "run.json");
  CHECK(run.at("status") == "failed");
}

TEST_CASE("simulate, train, eval, plot and report end to end") {
  testgen::TempDir tmp("cli-e2e");
  const fs::path ds = tmp.path() / "ds";
  const fs::path runs = tmp.path() / "runs";
  REQUIRE(simulate_small(ds) == kExitOk);
  const DatasetManifest m = read_manifest(ds);
  CHECK(m.sample_count == 40);
  CHECK(m.K == 16);
  CHECK(m.has_bfm);
  CHECK(m.has_images);
  CHECK_FALSE(m.generator_config_hash.empty());

  REQUIRE(cli(quick_train(ds, runs, "all", "1,2")) == kExitOk);
  const DatasetManifest after = read_manifest(ds);
  REQUIRE(after.split.has_value());
  REQUIRE(after.norm_stats.has_value());

  for (ModelKind k : {ModelKind::kMmi, ModelKind::kSmiBfm, ModelKind::kSmiImage})
    for (int seed : {1, 2}) {
      const fs::path dir = runs / run_dir_name(k, seed);
      for (const char* f : {"config.json", "split.json", "loss.csv", "run.json", "metrics.json"})
        CHECK_MESSAGE(fs::exists(dir / f), (dir / f).string());
      CHECK(fs::exists(dir / "checkpoint" / kCheckpointManifest));
      CHECK(read_json(dir / "run.json").at("status") == "ok");
      // Every run of the protocol sees the same split.
      CHECK(split_from_json(read_json(dir / "split.json")) == *after.split);
    }
  CHECK(run_dir_name(ModelKind::kMmi, 1) == "mmi-seed1");

  // eval rewrites the same metrics.
  const fs::path mmi1 = runs / run_dir_name(ModelKind::kMmi, 1);
  const double before = read_json(mmi1 / "metrics.json").at("test_rmse").get<double>();
  CHECK(cli({"eval", "--run", mmi1.string()}) == kExitOk);
  CHECK(read_json(mmi1 / "metrics.json").at("test_rmse").get<double>() == doctest::Approx(before).epsilon(1e-9));

  CHECK(cli({"plot", "--run", mmi1.string(), "--element", "1,2"}) == kExitOk);
  const auto first_test = after.split->test.front();
  const fs::path csv = mmi1 / "plots" / ("sample" + std::to_string(first_test) + "_h12.csv");
  REQUIRE(fs::exists(csv));
  const std::string text = read_text(csv);
  CHECK(text.rfind("k,truth,pred\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 17);
  CHECK(cli({"plot", "--run", mmi1.string(), "--element", "5,1"}) == kExitUsage);

  const fs::path out = tmp.path() / "report";
  REQUIRE(cli({"report", "--runs", runs.string(), "--out", out.string()}) == kExitOk);
  const Report report = build_report({runs});
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].kind == ModelKind::kSmiImage);
  CHECK(report.rows[1].kind == ModelKind::kSmiBfm);
  CHECK(report.rows[2].kind == ModelKind::kMmi);
  for (const auto& row : report.rows) {
    std::vector<double> values;
    for (int seed : {1, 2})
      values.push_back(read_json(runs / run_dir_name(row.kind, seed) / "metrics.json").at("test_rmse").get<double>());
    const RunMetrics s = summarize(values);
    CHECK(row.mean == s.mean);
    REQUIRE(row.std.has_value());
    CHECK(*row.std == s.std);
  }
  const std::string txt = read_text(out / "report.txt");
  CHECK(txt == format_report(report));
  CHECK(txt.find("ordering (lowest first): ") != std::string::npos);
  CHECK(txt.find("single seed") == std::string::npos);
  CHECK(read_json(out / "report.json") == to_json(report));
}

TEST_CASE("report marks kinds with a single seed and skips incomplete runs") {
  Report r;
  ReportRow a;
  a.kind = ModelKind::kSmiBfm;
  a.seeds = {1};
  a.rmse = {0.2};
  a.mean = 0.2;
  ReportRow b;
  b.kind = ModelKind::kMmi;
  b.seeds = {1, 2};
  b.rmse = {0.1, 0.12};
  b.mean = 0.11;
  b.std = 0.01;
  r.rows = {a, b};
  const std::string text = format_report(r);
  CHECK(text.find("SMI-BFM         1  0.200000\n") != std::string::npos);
  CHECK(text.find("MMI             2  0.110000 +/- 0.010000\n") != std::string::npos);
  CHECK(text.find("ordering (lowest first): MMI < SMI-BFM") != std::string::npos);
  CHECK(text.find("single seed") != std::string::npos);

  testgen::TempDir tmp("cli-report");
  // A run that never finished has run.json but no metrics.json. Plain directories are ignored.
  fs::create_directories(tmp.path() / "mmi-seed1");
  fs::create_directories(tmp.path() / "scratch");
  write_text_atomic(tmp.path() / "mmi-seed1" / "run.json", Json{{"status", "running"}}.dump());
  const Report empty = build_report({tmp.path()});
  CHECK(empty.rows.empty());
  CHECK(empty.warnings.size() == 1);
}
