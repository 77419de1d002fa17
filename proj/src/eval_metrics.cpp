#include "recomp/eval_metrics.hpp"

#include <cmath>
#include <cstdio>

#include "recomp/error.hpp"

namespace recomp {

double rmse(std::span<const Array3<float>> pred, std::span<const Array3<float>> truth) {
  if (pred.size() != truth.size())
    throw ShapeError("rmse: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " targets");
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].shape != truth[i].shape)
      throw ShapeError("rmse: prediction " + pred[i].shape_str() + " vs target " +
                       truth[i].shape_str());
    for (std::size_t j = 0; j < pred[i].data.size(); ++j) {
      const double d = static_cast<double>(pred[i].data[j]) - truth[i].data[j];
      sse += d * d;
    }
    count += pred[i].data.size();
  }
  if (count == 0) throw ShapeError("rmse: empty input");
  return std::sqrt(sse / static_cast<double>(count));
}

double rmse(const Array3<float>& pred, const Array3<float>& truth) {
  return rmse(std::span(&pred, 1), std::span(&truth, 1));
}

RunMetrics summarize(std::span<const double> per_seed_rmse) {
  if (per_seed_rmse.size() < 2)
    throw ConfigError("summarize: need at least 2 seeds, got " +
                      std::to_string(per_seed_rmse.size()));
  RunMetrics r;
  r.per_seed.assign(per_seed_rmse.begin(), per_seed_rmse.end());
  const auto n = static_cast<double>(r.per_seed.size());
  double sum = 0.0;
  for (double v : r.per_seed) sum += v;
  r.mean = sum / n;
  double ss = 0.0;
  for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

double test_rmse(Model<float>& model, const TrainData& data, int batch_size) {
  return std::sqrt(evaluate_mse(model, data, data.split.test, batch_size));
}

double mean_baseline_rmse(const TrainData& data) {
  const auto& train = data.split.train;
  const auto& test = data.split.test;
  if (train.empty() || test.empty()) throw ConfigError("mean_baseline_rmse: empty split");
  const std::size_t size = data.records[static_cast<std::size_t>(train[0])].target.data.size();
  std::vector<double> mean(size, 0.0);
  for (auto i : train) {
    const auto& t = data.records[static_cast<std::size_t>(i)].target.data;
    for (std::size_t j = 0; j < size; ++j) mean[j] += t[j];
  }
  for (double& v : mean) v /= static_cast<double>(train.size());
  double sse = 0.0;
  for (auto i : test) {
    const auto& t = data.records[static_cast<std::size_t>(i)].target.data;
    for (std::size_t j = 0; j < size; ++j) sse += (mean[j] - t[j]) * (mean[j] - t[j]);
  }
  return std::sqrt(sse / static_cast<double>(size * test.size()));
}

std::vector<SeriesRow> export_element_series(Model<float>& model, const PreprocessedRecord& record,
                                             int n, int m, int N, int M) {
  if (n < 1 || n > N || m < 1 || m > M)
    throw ConfigError("element (" + std::to_string(n) + ", " + std::to_string(m) +
                      ") out of range for N=" + std::to_string(N) + ", M=" + std::to_string(M));
  const Array3<float> pred = forward(model, record, nn::Mode::kEval);
  const int col = (n - 1) * M + (m - 1);
  if (col >= record.target.shape[1])
    throw ShapeError("element column " + std::to_string(col) + " outside target " +
                     record.target.shape_str());
  std::vector<SeriesRow> rows;
  for (int k = 0; k < record.target.shape[0]; ++k)
    rows.push_back({k, record.target(k, col, 0), pred(k, col, 0)});
  return rows;
}

std::string series_csv(std::span<const SeriesRow> rows) {
  std::string out = "k,truth,pred\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", r.k, r.truth, r.pred);
    out += buf;
  }
  return out;
}

}  // namespace recomp
