#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "recomp/dataset_store.hpp"
#include "recomp/model_zoo.hpp"
#include "recomp/preprocess.hpp"

namespace recomp {

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 100;
  double learning_rate = 1e-3;
  int patience = 10;
  std::array<double, 3> split_ratio{0.72, 0.18, 0.10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t split_seed = 0;
  int image_h = 96;
  int image_w = 96;
  /// Runs one (kind, seed) at a time. Each run is single-threaded either way,
  /// so this only pins scheduling order.
  bool deterministic = true;
  int jobs = 1;

  void validate() const;
};

Json to_json(const TrainConfig& c);
/// Applies `key = value` overrides; unknown keys are rejected by name.
void apply_train_overrides(TrainConfig& c, const std::map<std::string, std::string>& kv);

/// Seeded random partition. Validation and test sizes are floor(n * r); the
/// remainder goes to training.
SplitIndices split_dataset(std::int64_t n, const std::array<double, 3>& ratio, std::uint64_t seed);

/// Patience-based stopping. An epoch "improves" when its loss is <= the best
/// loss so far; the run stops once `patience` consecutive epochs fail to.
/// The best epoch is the first one reaching the minimum.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  struct Update {
    bool new_best = false;  // strictly below the previous best: snapshot weights
    bool stop = false;
  };
  Update update(int epoch, double val_loss);

  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  int stale_ = 0;
  bool any_ = false;
};

/// Epoch (1-based) at which training on `val_losses` ends: the stop epoch, or
/// min(max_epochs, size) if patience never runs out.
int stopping_epoch(std::span<const double> val_losses, int patience, int max_epochs);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct RunRecord {
  ModelKind kind = ModelKind::kMmi;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  ModelSpec spec;
  ModelParams best_params;
};

/// Preprocessed records with normalized targets plus the split they were
/// normalized against.
struct TrainData {
  std::vector<PreprocessedRecord> records;
  SplitIndices split;
  NormStats stats;
  bool has_bfm = false;
  bool has_images = false;
  int K = 0;
  int F_b = 0;
  int F_h = 0;
  int h = 0;
  int w = 0;

  ModelDims dims() const { return {K, F_b, F_h, h, w}; }
};

/// Builds model-ready records. NormStats are fitted on `split.train` only.
/// BFMs are emulated from CSI when the dataset carries none.
TrainData prepare_training_data(const Dataset& ds, const SplitIndices& split, int image_h,
                                int image_w);

/// Throws DataError(kModalityMissing) if `kind` needs an input the data lacks.
void require_modalities(ModelKind kind, const TrainData& data);

struct TrainHooks {
  /// Replaces the measured validation loss of an epoch (tests inject sequences).
  std::function<double(int epoch, double measured)> val_loss_override;
  std::function<void(const EpochLog&)> on_epoch;
};

RunRecord train(ModelKind kind, const TrainData& data, const TrainConfig& config,
                std::uint64_t seed, const TrainHooks& hooks = {});

/// Mean squared error of eval-mode predictions over `indices`.
double evaluate_mse(Model<float>& model, const TrainData& data,
                    std::span<const std::int64_t> indices, int batch_size);

struct ProtocolRun {
  ModelKind kind = ModelKind::kMmi;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunRecord record;
};

/// Every kind x seed on one shared split. Failed runs keep their error text and
/// do not stop the others. `on_done` is called as each run finishes.
std::vector<ProtocolRun> run_protocol(const TrainData& data, std::span<const ModelKind> kinds,
                                      const TrainConfig& config,
                                      const std::function<void(const ProtocolRun&)>& on_done = {});

}  // namespace recomp
