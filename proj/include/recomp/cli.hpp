#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recomp/config_io.hpp"
#include "recomp/eval_metrics.hpp"
#include "recomp/train_loop.hpp"

namespace recomp {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRunFailure = 3 };

int run_cli(int argc, char** argv);

/// Run directory name for one (kind, seed).
std::string run_dir_name(ModelKind kind, std::uint64_t seed);

/// Writes config.json, split.json, loss.csv, checkpoint/, run.json and, for a
/// successful run, metrics.json.
void write_run_dir(const std::filesystem::path& dir, const ProtocolRun& run, const TrainData& data,
                   const TrainConfig& config, const std::filesystem::path& dataset_dir);

/// Test and baseline RMSE of the checkpoint in `run_dir`, written to metrics.json.
Json evaluate_run(const std::filesystem::path& run_dir, const TrainData& data);

struct ReportRow {
  ModelKind kind = ModelKind::kMmi;
  std::vector<std::uint64_t> seeds;
  std::vector<double> rmse;
  double mean = 0.0;
  std::optional<double> std;  // absent with a single seed
};

struct Report {
  std::vector<ReportRow> rows;  // SMI-image, SMI-BFM, MMI order, kinds without runs omitted
  std::vector<std::string> warnings;
};

/// Collects metrics.json from run directories, or from their immediate
/// subdirectories when given a root. Incomplete runs become warnings.
Report build_report(const std::vector<std::filesystem::path>& roots);
std::string format_report(const Report& report);
Json to_json(const Report& report);

}  // namespace recomp
