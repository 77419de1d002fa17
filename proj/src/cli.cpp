#include "recomp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "recomp/dataset_store.hpp"
#include "recomp/error.hpp"

namespace recomp {
namespace {

namespace fs = std::filesystem;

std::map<std::string, std::string> collect_settings(const std::string& config_file,
                                                    const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  if (!config_file.empty()) kv = read_key_value_file(config_file);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

Json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw DataError(DataError::Kind::kMissingFile, path.string() + ": missing");
  const auto bytes = read_file(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::exception& e) {
    throw DataError(DataError::Kind::kFormat, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string config;
  std::vector<std::string> sets;
  std::int64_t samples = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.samples < 1) throw ConfigError("--samples must be at least 1");
  SceneConfig config;
  apply_scene_overrides(config, collect_settings(a.config, a.sets));
  if (a.seed) config.rng_seed = *a.seed;
  config.validate();

  DatasetManifest m;
  m.K = config.K;
  m.N = config.N;
  m.M = config.M;
  m.S_cols = std::min(config.M, config.N);
  m.image_height = config.image_height;
  m.image_width = config.image_width;
  m.has_bfm = true;
  m.has_images = true;
  m.seed = config.rng_seed;
  m.generator_config = to_json(config);
  m.generator_config_hash = config_hash(m.generator_config);

  DatasetWriter writer(a.out, m);
  for (std::int64_t t = 0; t < a.samples; ++t) {
    const ScenePair p = generate_sample(config, t);
    const BfmSample bfm = emulate_bfm(p.csi);
    writer.append(p.csi, &bfm, &p.state.image);
  }
  const DatasetManifest done = writer.finish();
  std::cout << "wrote " << done.sample_count << " samples (K=" << done.K << ", M=" << done.M
            << ", N=" << done.N << ", images " << done.image_height << "x" << done.image_width
            << ") to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ import

struct ImportArgs {
  std::string csi;
  int K = 0, N = 0, M = 0;
  std::int64_t samples = 0;
  std::string out;
  bool emulate = false;
};

int cmd_import(const ImportArgs& a) {
  const Json stub = {{"K", a.K}, {"N", a.N}, {"M", a.M}, {"sample_count", a.samples}};
  DatasetManifest m = import_external_csi(a.csi, stub, a.out);
  if (a.emulate) m = add_emulated_bfm(a.out);
  std::cout << "imported " << m.sample_count << " CSI samples to " << a.out
            << (m.has_bfm ? " (with emulated BFM)" : "") << "\n";
  return kExitOk;
}

int cmd_emulate_bfm(const std::string& dataset) {
  const DatasetManifest m = add_emulated_bfm(dataset);
  std::cout << "wrote bfm.bin for " << m.sample_count << " samples in " << dataset << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string dataset;
  std::vector<std::string> models;
  std::string seeds;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  int jobs = 1;
  bool deterministic = false;
};

std::vector<ModelKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<ModelKind> kinds;
  for (const auto& group : names) {
    std::stringstream ss(group);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "all") {
        for (ModelKind k : {ModelKind::kMmi, ModelKind::kSmiBfm, ModelKind::kSmiImage})
          if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
        continue;
      }
      const ModelKind k = parse_model_kind(item);
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
  }
  if (kinds.empty()) throw ConfigError("--model: no model kind given");
  return kinds;
}

TrainData load_train_data(const fs::path& dataset_dir, const SplitIndices& split,
                          const TrainConfig& config) {
  const Dataset ds = read_dataset(dataset_dir);
  if (ds.manifest.has_images &&
      (config.image_h > ds.manifest.image_height || config.image_w > ds.manifest.image_width))
    throw ConfigError("image_h x image_w exceeds the dataset images (" +
                      std::to_string(ds.manifest.image_height) + "x" +
                      std::to_string(ds.manifest.image_width) + ")");
  return prepare_training_data(ds, split, config.image_h, config.image_w);
}

int cmd_train(const TrainArgs& a) {
  TrainConfig config;
  apply_train_overrides(config, collect_settings(a.config, a.sets));
  if (!a.seeds.empty()) config.seeds = parse_u64_list("seeds", a.seeds);
  config.jobs = a.jobs;
  config.deterministic = a.deterministic || a.jobs == 1;
  config.validate();
  const std::vector<ModelKind> kinds = parse_kinds(a.models);

  DatasetManifest manifest = read_manifest(a.dataset);
  SplitIndices split;
  if (manifest.split && manifest.split->seed == config.split_seed &&
      static_cast<std::int64_t>(manifest.split->train.size() + manifest.split->val.size() +
                                manifest.split->test.size()) == manifest.sample_count) {
    split = *manifest.split;
  } else {
    split = split_dataset(manifest.sample_count, config.split_ratio, config.split_seed);
  }
  const TrainData data = load_train_data(a.dataset, split, config);
  for (ModelKind k : kinds) require_modalities(k, data);

  // Record the shared split and training statistics with the dataset.
  manifest = read_manifest(a.dataset);
  manifest.split = split;
  manifest.norm_stats = data.stats;
  write_manifest(a.dataset, manifest);

  const fs::path out = a.out;
  fs::create_directories(out);
  std::cout << "training " << kinds.size() * config.seeds.size() << " runs on "
            << data.split.train.size() << "/" << data.split.val.size() << "/"
            << data.split.test.size() << " samples\n";
  const auto runs = run_protocol(data, kinds, config, [&](const ProtocolRun& run) {
    const fs::path dir = out / run_dir_name(run.kind, run.seed);
    write_run_dir(dir, run, data, config, fs::absolute(a.dataset));
    if (run.ok) {
      const Json metrics = read_json(dir / "metrics.json");
      std::cout << to_string(run.kind) << " seed " << run.seed << ": epochs "
                << run.record.stop_epoch << ", best " << run.record.best_epoch << ", test RMSE "
                << fmt("%.6f", metrics.at("test_rmse").get<double>()) << std::endl;
    } else {
      std::cerr << to_string(run.kind) << " seed " << run.seed << " failed: " << run.error
                << std::endl;
    }
  });
  const bool all_ok = std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.ok; });
  return all_ok ? kExitOk : kExitRunFailure;
}

// ------------------------------------------------------------------ eval / plot

struct RunContext {
  Json config;
  TrainConfig train_config;
  TrainData data;
};

RunContext load_run_context(const fs::path& run_dir, const std::string& dataset_override) {
  RunContext ctx;
  ctx.config = read_json(run_dir / "config.json");
  std::map<std::string, std::string> kv;
  kv["image_h"] = std::to_string(ctx.config.at("train").at("image_h").get<int>());
  kv["image_w"] = std::to_string(ctx.config.at("train").at("image_w").get<int>());
  apply_train_overrides(ctx.train_config, kv);
  const fs::path dataset = dataset_override.empty()
                               ? fs::path(ctx.config.at("dataset").get<std::string>())
                               : fs::path(dataset_override);
  SplitIndices split;
  try {
    split = split_from_json(read_json(run_dir / "split.json"));
  } catch (const Json::exception& e) {
    throw DataError(DataError::Kind::kFormat, "split.json: " + std::string(e.what()));
  }
  ctx.data = load_train_data(dataset, split, ctx.train_config);
  return ctx;
}

int cmd_eval(const std::string& run_dir, const std::string& dataset) {
  const RunContext ctx = load_run_context(run_dir, dataset);
  const Json m = evaluate_run(run_dir, ctx.data);
  std::cout << "model          " << m.at("model").get<std::string>() << "\n"
            << "seed           " << m.at("seed").get<std::uint64_t>() << "\n"
            << "test samples   " << m.at("test_samples").get<std::int64_t>() << "\n"
            << "test RMSE      " << fmt("%.6f", m.at("test_rmse").get<double>()) << "\n"
            << "baseline RMSE  " << fmt("%.6f", m.at("baseline_rmse").get<double>()) << "\n";
  return kExitOk;
}

std::string series_svg(const std::vector<SeriesRow>& rows, const std::string& title) {
  const double W = 640, H = 360, left = 60, right = 20, top = 36, bottom = 44;
  double lo = 0.0, hi = 1.0;
  for (const auto& r : rows) {
    lo = std::min({lo, static_cast<double>(r.truth), static_cast<double>(r.pred)});
    hi = std::max({hi, static_cast<double>(r.truth), static_cast<double>(r.pred)});
  }
  const double k_max = rows.size() > 1 ? static_cast<double>(rows.back().k) : 1.0;
  const auto x = [&](double k) { return left + (W - left - right) * k / k_max; };
  const auto y = [&](double v) { return H - bottom - (H - top - bottom) * (v - lo) / (hi - lo); };
  const auto line = [&](bool pred) {
    std::string pts;
    for (const auto& r : rows)
      pts += fmt("%.2f", x(r.k)) + "," + fmt("%.2f", y(pred ? r.pred : r.truth)) + " ";
    return pts;
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\""
    << H - bottom << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.1f", y(v) + 4)
      << "\" text-anchor=\"end\">" << fmt("%.2f", v) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double k = k_max * i / 4.0;
    s << "<text x=\"" << fmt("%.1f", x(k)) << "\" y=\"" << H - bottom + 16
      << "\" text-anchor=\"middle\">" << fmt("%.0f", k) << "</text>\n";
  }
  s << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 8
    << "\" text-anchor=\"middle\">subcarrier k</text>\n"
    << "<polyline fill=\"none\" stroke=\"#1f4e99\" stroke-width=\"1.5\" points=\"" << line(false)
    << "\"/>\n"
    << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\" "
       "points=\""
    << line(true) << "\"/>\n"
    << "<text x=\"" << W - right - 120 << "\" y=\"" << top + 4
    << "\" fill=\"#1f4e99\">ground truth</text>\n"
    << "<text x=\"" << W - right - 120 << "\" y=\"" << top + 20
    << "\" fill=\"#c0392b\">prediction</text>\n"
    << "</svg>\n";
  return s.str();
}

struct PlotArgs {
  std::string run;
  std::string dataset;
  std::int64_t sample = -1;
  std::vector<std::string> elements;
  std::string out;
};

int cmd_plot(const PlotArgs& a) {
  const RunContext ctx = load_run_context(a.run, a.dataset);
  const Checkpoint ckpt = read_checkpoint(fs::path(a.run) / "checkpoint");
  Model<float> model(ckpt.spec, 0);
  model.load_params(ckpt.params);

  // Default to the first test sample.
  const std::int64_t sample = a.sample >= 0 ? a.sample : ctx.data.split.test.front();
  if (sample >= static_cast<std::int64_t>(ctx.data.records.size()))
    throw ConfigError("--sample " + std::to_string(sample) + " out of range");
  const int N_ant = ctx.config.at("dims").at("N").get<int>();
  const int M_ant = ctx.config.at("dims").at("M").get<int>();

  std::vector<std::string> elements = a.elements;
  if (elements.empty()) elements = {"1,1", "1,2", "1,3"};
  const fs::path out = a.out.empty() ? fs::path(a.run) / "plots" : fs::path(a.out);
  fs::create_directories(out);
  for (const auto& e : elements) {
    const auto nm = parse_doubles("element", e, 2);
    const int n = static_cast<int>(nm[0]), m = static_cast<int>(nm[1]);
    const auto rows = export_element_series(model, ctx.data.records[static_cast<std::size_t>(sample)],
                                            n, m, N_ant, M_ant);
    const std::string stem =
        "sample" + std::to_string(sample) + "_h" + std::to_string(n) + std::to_string(m);
    write_text_atomic(out / (stem + ".csv"), series_csv(rows));
    write_text_atomic(out / (stem + ".svg"),
                      series_svg(rows, to_string(ckpt.spec.kind) + ": |h(" + std::to_string(n) +
                                           "," + std::to_string(m) + ")|, sample " +
                                           std::to_string(sample)));
    std::cout << "wrote " << (out / (stem + ".csv")).string() << " and .svg\n";
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<fs::path> roots(runs.begin(), runs.end());
  const Report report = build_report(roots);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (report.rows.empty()) {
    std::cerr << "error: no completed runs found\n";
    return kExitData;
  }
  const std::string text = format_report(report);
  std::cout << text;
  const fs::path dir = out.empty() ? roots.front() : fs::path(out);
  fs::create_directories(dir);
  write_text_atomic(dir / "report.txt", text);
  write_json(dir / "report.json", to_json(report));
  return kExitOk;
}

}  // namespace

std::string run_dir_name(ModelKind kind, std::uint64_t seed) {
  return cli_name(kind) + "-seed" + std::to_string(seed);
}

Json evaluate_run(const fs::path& run_dir, const TrainData& data) {
  const Checkpoint ckpt = read_checkpoint(run_dir / "checkpoint");
  Model<float> model(ckpt.spec, 0);
  model.load_params(ckpt.params);
  const Json config = read_json(run_dir / "config.json");
  Json m;
  m["model"] = to_string(ckpt.spec.kind);
  m["seed"] = config.at("seed");
  m["test_samples"] = data.split.test.size();
  m["test_rmse"] = test_rmse(model, data);
  m["baseline_rmse"] = mean_baseline_rmse(data);
  m["best_epoch"] = ckpt.epoch;
  m["best_val_loss"] = ckpt.metrics.value("best_val_loss", 0.0);
  write_json(run_dir / "metrics.json", m);
  return m;
}

void write_run_dir(const fs::path& dir, const ProtocolRun& run, const TrainData& data,
                   const TrainConfig& config, const fs::path& dataset_dir) {
  fs::create_directories(dir);
  fs::remove(dir / "metrics.json");
  Json c;
  c["model"] = cli_name(run.kind);
  c["seed"] = run.seed;
  c["dataset"] = dataset_dir.string();
  const DatasetManifest dm = read_manifest(dataset_dir);
  c["dims"] = {{"K", data.K}, {"N", dm.N}, {"M", dm.M}, {"F_b", data.F_b}, {"F_h", data.F_h},
               {"h", data.h}, {"w", data.w}};
  c["dataset_config_hash"] = dm.generator_config_hash;
  c["train"] = to_json(config);
  write_json(dir / "config.json", c);
  write_json(dir / "split.json", to_json(data.split));

  std::string loss = "epoch,train_loss,val_loss\n";
  for (const auto& e : run.record.epochs)
    loss += std::to_string(e.epoch) + "," + fmt("%.9g", e.train_loss) + "," +
            fmt("%.9g", e.val_loss) + "\n";
  write_text_atomic(dir / "loss.csv", loss);

  Json r;
  r["model"] = to_string(run.kind);
  r["seed"] = run.seed;
  r["status"] = run.ok ? "ok" : "failed";
  if (!run.ok) r["error"] = run.error;
  r["epochs_run"] = run.record.stop_epoch;
  r["best_epoch"] = run.record.best_epoch;
  r["best_val_loss"] = run.record.best_val_loss;
  r["stopped_early"] = run.record.stopped_early;
  write_json(dir / "run.json", r);
  if (!run.ok) return;

  Checkpoint ckpt;
  ckpt.spec = run.record.spec;
  ckpt.params = run.record.best_params;
  ckpt.epoch = run.record.best_epoch;
  ckpt.metrics = {{"best_val_loss", run.record.best_val_loss}};
  write_checkpoint(dir / "checkpoint", ckpt);
  evaluate_run(dir, data);
}

// ------------------------------------------------------------------ report

Report build_report(const std::vector<fs::path>& roots) {
  Report report;
  std::vector<fs::path> dirs;
  for (const auto& root : roots) {
    if (fs::exists(root / "run.json")) {
      dirs.push_back(root);
    } else if (fs::is_directory(root)) {
      std::vector<fs::path> sub;
      for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "run.json")) sub.push_back(e.path());
      std::sort(sub.begin(), sub.end());
      dirs.insert(dirs.end(), sub.begin(), sub.end());
    } else {
      report.warnings.push_back(root.string() + ": not a run directory");
    }
  }

  std::map<ModelKind, ReportRow> rows;
  for (const auto& dir : dirs) {
    try {
      const Json run = read_json(dir / "run.json");
      if (run.at("status").get<std::string>() != "ok" || !fs::exists(dir / "metrics.json")) {
        report.warnings.push_back(dir.string() + ": incomplete run skipped");
        continue;
      }
      const Json m = read_json(dir / "metrics.json");
      const ModelKind kind = parse_model_kind(m.at("model").get<std::string>());
      ReportRow& row = rows[kind];
      row.kind = kind;
      row.seeds.push_back(m.at("seed").get<std::uint64_t>());
      row.rmse.push_back(m.at("test_rmse").get<double>());
    } catch (const std::exception& e) {
      report.warnings.push_back(dir.string() + ": skipped (" + e.what() + ")");
    }
  }
  for (ModelKind kind : {ModelKind::kSmiImage, ModelKind::kSmiBfm, ModelKind::kMmi}) {
    auto it = rows.find(kind);
    if (it == rows.end()) continue;
    ReportRow row = it->second;
    if (row.rmse.size() >= 2) {
      const RunMetrics s = summarize(row.rmse);
      row.mean = s.mean;
      row.std = s.std;
    } else {
      row.mean = row.rmse.front();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_report(const Report& report) {
  std::ostringstream s;
  s << "Recomposition errors (test RMSE, normalized amplitude)\n";
  s << "model       seeds  RMSE (mean +/- std)\n";
  bool single = false;
  for (const auto& r : report.rows) {
    char line[128];
    if (r.std) {
      std::snprintf(line, sizeof line, "%-10s  %5zu  %.6f +/- %.6f\n", to_string(r.kind).c_str(),
                    r.rmse.size(), r.mean, *r.std);
    } else {
      single = true;
      std::snprintf(line, sizeof line, "%-10s  %5zu  %.6f\n", to_string(r.kind).c_str(),
                    r.rmse.size(), r.mean);
    }
    s << line;
  }
  std::vector<const ReportRow*> order;
  for (const auto& r : report.rows) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const ReportRow* a, const ReportRow* b) { return a->mean < b->mean; });
  s << "ordering (lowest first): ";
  for (std::size_t i = 0; i < order.size(); ++i)
    s << (i ? " < " : "") << to_string(order[i]->kind);
  s << "\n";
  if (single) s << "note: std omitted for kinds with a single seed\n";
  return s.str();
}

Json to_json(const Report& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json j;
    j["model"] = to_string(r.kind);
    j["seeds"] = r.seeds;
    j["rmse"] = r.rmse;
    j["mean"] = r.mean;
    j["std"] = r.std ? Json(*r.std) : Json();
    rows.push_back(j);
  }
  return {{"rows", rows}, {"warnings", report.warnings}};
}

// ------------------------------------------------------------------ entry

int run_cli(int argc, char** argv) {
  CLI::App app{"Multimodal CSI recomposition pipeline"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Synthesize a paired image/CSI dataset");
  simulate->add_option("--config", sim.config, "key = value scene config file");
  simulate->add_option("--set", sim.sets, "Scene config override key=value (repeatable)");
  simulate->add_option("--samples", sim.samples, "Number of samples")->required();
  simulate->add_option("--seed", sim.seed, "Noise seed (overrides rng_seed)");
  simulate->add_option("--out", sim.out, "Output dataset directory")->required();

  std::string bfm_dataset;
  auto* emulate = app.add_subcommand("emulate-bfm", "Compute bfm.bin for a dataset lacking it");
  emulate->add_option("--dataset", bfm_dataset, "Dataset directory")->required();

  ImportArgs imp;
  auto* import = app.add_subcommand("import", "Import raw complex64 CSI as a dataset");
  import->add_option("--csi", imp.csi, "Raw file, layout [sample][k][n][m]")->required();
  import->add_option("--K", imp.K, "Subcarriers")->required();
  import->add_option("--N", imp.N, "Receive antennas")->required();
  import->add_option("--M", imp.M, "Transmit antennas")->required();
  import->add_option("--samples", imp.samples, "Sample count")->required();
  import->add_option("--out", imp.out, "Output dataset directory")->required();
  import->add_flag("--emulate-bfm", imp.emulate, "Also compute bfm.bin");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train model kinds over seeds on one split");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  train_cmd->add_option("--model", tr.models, "mmi, smi-bfm, smi-image or all (comma list)")
      ->required();
  train_cmd->add_option("--seeds", tr.seeds, "Comma-separated seeds (default 1,2,3,4,5)");
  train_cmd->add_option("--out", tr.out, "Root for run directories")->required();
  train_cmd->add_option("--config", tr.config, "key = value training config file");
  train_cmd->add_option("--set", tr.sets, "Training config override key=value (repeatable)");
  train_cmd->add_option("--jobs", tr.jobs, "Runs trained concurrently")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--deterministic", tr.deterministic, "Train one run at a time");

  std::string eval_run, eval_dataset;
  auto* eval = app.add_subcommand("eval", "Recompute test metrics of a run");
  eval->add_option("--run", eval_run, "Run directory")->required();
  eval->add_option("--dataset", eval_dataset, "Dataset directory (default: the one trained on)");

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "Export per-element amplitude series (CSV + SVG)");
  plot->add_option("--run", pl.run, "Run directory")->required();
  plot->add_option("--dataset", pl.dataset, "Dataset directory (default: the one trained on)");
  plot->add_option("--sample", pl.sample, "Sample index (default: first test sample)");
  plot->add_option("--element", pl.elements, "Element n,m, 1-based (repeatable)");
  plot->add_option("--out", pl.out, "Output directory (default: <run>/plots)");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Tabulate test RMSE per model kind");
  report->add_option("--runs", report_runs, "Run directories or roots holding them")->required();
  report->add_option("--out", report_out, "Where report.txt/report.json go");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*emulate) return cmd_emulate_bfm(bfm_dataset);
    if (*import) return cmd_import(imp);
    if (*train_cmd) return cmd_train(tr);
    if (*eval) return cmd_eval(eval_run, eval_dataset);
    if (*plot) return cmd_plot(pl);
    if (*report) return cmd_report(report_runs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitUsage;
}

}  // namespace recomp
