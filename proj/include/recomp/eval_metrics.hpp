#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recomp/array3.hpp"
#include "recomp/model_zoo.hpp"
#include "recomp/train_loop.hpp"

namespace recomp {

/// Root of the mean squared difference over every entry of every sample.
/// Throws ShapeError on count or shape mismatch.
double rmse(std::span<const Array3<float>> pred, std::span<const Array3<float>> truth);
double rmse(const Array3<float>& pred, const Array3<float>& truth);

struct RunMetrics {
  ModelKind kind = ModelKind::kMmi;
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;  // population
  std::int64_t sample_count = 0;
};

/// Mean and population standard deviation. Needs at least two values.
RunMetrics summarize(std::span<const double> per_seed_rmse);

/// Test-split RMSE of a model in eval mode, normalized domain.
double test_rmse(Model<float>& model, const TrainData& data, int batch_size = 64);

/// RMSE of always predicting the per-coordinate training-split mean target.
double mean_baseline_rmse(const TrainData& data);

struct SeriesRow {
  int k = 0;
  float truth = 0.0f;
  float pred = 0.0f;
};

/// Per-subcarrier amplitude of element (n, m) (1-based) for one sample.
/// Element column is (n - 1) * M + (m - 1).
std::vector<SeriesRow> export_element_series(Model<float>& model, const PreprocessedRecord& record,
                                             int n, int m, int N, int M);

/// CSV with header "k,truth,pred".
std::string series_csv(std::span<const SeriesRow> rows);

}  // namespace recomp
