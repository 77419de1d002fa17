#include "recomp/train_loop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "recomp/error.hpp"
#include "recomp/nn/adam.hpp"

namespace recomp {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be positive");
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (patience < 1 || patience > max_epochs)
    throw ConfigError("train config: patience must lie in [1, max_epochs]");
  double sum = 0.0;
  for (double r : split_ratio) {
    if (!(r > 0.0)) throw ConfigError("train config: split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("train config: split ratios must sum to 1");
  if (seeds.empty()) throw ConfigError("train config: at least one seed is required");
  if (image_h < 1 || image_w < 1) throw ConfigError("train config: image size must be positive");
  if (jobs < 1) throw ConfigError("train config: jobs must be positive");
}

Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"learning_rate", c.learning_rate},
          {"optimizer", "adam"},
          {"loss", "mse"},
          {"patience", c.patience},
          {"split_ratio", c.split_ratio},
          {"seeds", c.seeds},
          {"split_seed", c.split_seed},
          {"image_h", c.image_h},
          {"image_w", c.image_w},
          {"deterministic", c.deterministic},
          {"jobs", c.jobs}};
}

void apply_train_overrides(TrainConfig& c, const std::map<std::string, std::string>& kv) {
  std::string unknown;
  for (const auto& [key, value] : kv) {
    if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "max_epochs") c.max_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "patience") c.patience = static_cast<int>(parse_int(key, value));
    else if (key == "split_ratio") {
      const auto r = parse_doubles(key, value, 3);
      c.split_ratio = {r[0], r[1], r[2]};
    } else if (key == "seeds") c.seeds = parse_u64_list(key, value);
    else if (key == "split_seed") c.split_seed = parse_u64(key, value);
    else if (key == "image_h") c.image_h = static_cast<int>(parse_int(key, value));
    else if (key == "image_w") c.image_w = static_cast<int>(parse_int(key, value));
    else if (key == "deterministic") c.deterministic = parse_bool(key, value);
    else if (key == "jobs") c.jobs = static_cast<int>(parse_int(key, value));
    else unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown train config keys: " + unknown);
}

SplitIndices split_dataset(std::int64_t n, const std::array<double, 3>& ratio, std::uint64_t seed) {
  // The tiny epsilon keeps exact products such as 0.18 * 24000 from flooring down.
  const auto part = [n](double r) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::int64_t n_val = part(ratio[1]);
  const std::int64_t n_test = part(ratio[2]);
  const std::int64_t n_train = n - n_val - n_test;
  if (n < 10 || n_val < 1 || n_test < 1 || n_train < 1)
    throw ConfigError("split_dataset: n=" + std::to_string(n) +
                      " is too small to give every split at least one sample");

  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitIndices s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  return s;
}

EarlyStopping::Update EarlyStopping::update(int epoch, double val_loss) {
  Update u;
  if (!any_ || val_loss < best_loss_) {
    any_ = true;
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    stale_ = 0;
    u.new_best = true;
  } else if (val_loss <= best_loss_) {
    stale_ = 0;
  } else {
    ++stale_;
  }
  u.stop = stale_ >= patience_;
  return u;
}

int stopping_epoch(std::span<const double> val_losses, int patience, int max_epochs) {
  EarlyStopping stopper(patience);
  const int last = std::min<int>(max_epochs, static_cast<int>(val_losses.size()));
  for (int e = 1; e <= last; ++e)
    if (stopper.update(e, val_losses[e - 1]).stop) return e;
  return last;
}

TrainData prepare_training_data(const Dataset& ds, const SplitIndices& split, int image_h,
                                int image_w) {
  const DatasetManifest& m = ds.manifest;
  const auto n = static_cast<std::size_t>(m.sample_count);
  if (split.train.size() + split.val.size() + split.test.size() != n)
    throw ConfigError("prepare_training_data: split does not cover the dataset");

  TrainData data;
  data.split = split;
  data.has_bfm = true;  // emulated from CSI when absent
  data.has_images = m.has_images;
  data.K = m.K;
  data.F_b = m.M * m.S_cols;
  data.F_h = m.N * m.M;
  data.h = image_h;
  data.w = image_w;

  std::vector<Array3<float>> raw_targets(n);
  data.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    PreprocessedRecord& r = data.records[i];
    r.bfm_features = flatten_bfm(m.has_bfm ? ds.bfm[i] : emulate_bfm(ds.csi[i]));
    if (m.has_images) r.image = downsample_image(ds.images[i], image_h, image_w);
    raw_targets[i] = flatten_csi_amplitude(ds.csi[i]);
  }
  data.stats = fit_norm_stats(raw_targets, split.train);
  for (std::size_t i = 0; i < n; ++i) data.records[i].target = normalize(raw_targets[i], data.stats);
  return data;
}

void require_modalities(ModelKind kind, const TrainData& data) {
  if (kind != ModelKind::kSmiBfm && !data.has_images)
    throw DataError(DataError::Kind::kModalityMissing,
                    "modality missing: " + to_string(kind) + " needs images but the dataset has none");
  if (kind != ModelKind::kSmiImage && !data.has_bfm)
    throw DataError(DataError::Kind::kModalityMissing,
                    "modality missing: " + to_string(kind) + " needs BFMs but the dataset has none");
}

double evaluate_mse(Model<float>& model, const TrainData& data,
                    std::span<const std::int64_t> indices, int batch_size) {
  double sse = 0.0;
  std::size_t count = 0;
  std::vector<const PreprocessedRecord*> batch;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    batch.clear();
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(&data.records[static_cast<std::size_t>(indices[i])]);
    const auto preds = forward(model, batch, nn::Mode::kEval);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& t = batch[b]->target.data;
      const auto& p = preds[b].data;
      for (std::size_t j = 0; j < t.size(); ++j) {
        const double d = static_cast<double>(p[j]) - t[j];
        sse += d * d;
      }
      count += t.size();
    }
  }
  return count == 0 ? 0.0 : sse / static_cast<double>(count);
}

RunRecord train(ModelKind kind, const TrainData& data, const TrainConfig& config,
                std::uint64_t seed, const TrainHooks& hooks) {
  config.validate();
  require_modalities(kind, data);
  if (data.split.train.empty() || data.split.val.empty())
    throw ConfigError("train: empty training or validation split");

  RunRecord rec;
  rec.kind = kind;
  rec.seed = seed;
  rec.spec = build_model(kind, data.dims());
  Model<float> model(rec.spec, seed);
  nn::Adam<float> adam(model.parameters(), config.learning_rate);
  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                             0x5eedu};
  std::mt19937_64 rng(shuffle_seed);

  const bool use_bfm = rec.spec.uses_bfm();
  const bool use_image = rec.spec.uses_image();
  EarlyStopping stopper(config.patience);
  std::vector<std::int64_t> order = data.split.train;
  std::vector<const PreprocessedRecord*> batch;
  rec.best_params = model.params();

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(&data.records[static_cast<std::size_t>(order[i])]);
      nn::Tensor<float> b, img;
      if (use_bfm) b = pack_bfm<float>(batch);
      if (use_image) img = pack_images<float>(batch);
      const nn::Tensor<float> target = pack_targets<float>(batch);
      const nn::Tensor<float> y =
          model.forward(use_bfm ? &b : nullptr, use_image ? &img : nullptr, nn::Mode::kTrain);

      nn::Tensor<float> grad(y.shape());
      const auto n = static_cast<double>(y.size());
      double batch_sse = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double d = static_cast<double>(y.data()[j]) - target.data()[j];
        batch_sse += d * d;
        grad.data()[j] = static_cast<float>(2.0 * d / n);
      }
      if (!std::isfinite(batch_sse))
        throw DivergenceError(epoch, "training diverged (non-finite loss) in epoch " +
                                         std::to_string(epoch));
      sse += batch_sse;
      count += y.size();
      adam.zero_grad();
      model.backward(grad);
      adam.step();
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = sse / static_cast<double>(count);
    log.val_loss = evaluate_mse(model, data, data.split.val, config.batch_size);
    if (hooks.val_loss_override) log.val_loss = hooks.val_loss_override(epoch, log.val_loss);
    if (!std::isfinite(log.val_loss) || !std::isfinite(log.train_loss))
      throw DivergenceError(epoch, "training diverged (non-finite loss) in epoch " +
                                       std::to_string(epoch));
    rec.epochs.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);

    const auto u = stopper.update(epoch, log.val_loss);
    if (u.new_best) rec.best_params = model.params();
    if (u.stop) {
      rec.stopped_early = true;
      break;
    }
  }
  rec.best_epoch = stopper.best_epoch();
  rec.best_val_loss = stopper.best_loss();
  rec.stop_epoch = static_cast<int>(rec.epochs.size());
  return rec;
}

std::vector<ProtocolRun> run_protocol(const TrainData& data, std::span<const ModelKind> kinds,
                                      const TrainConfig& config,
                                      const std::function<void(const ProtocolRun&)>& on_done) {
  config.validate();
  std::vector<ProtocolRun> runs;
  for (ModelKind k : kinds)
    for (std::uint64_t s : config.seeds) runs.push_back({k, s, false, {}, {}});

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      ProtocolRun& run = runs[i];
      try {
        run.record = train(run.kind, data, config, run.seed);
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (on_done) {
        std::lock_guard<std::mutex> lock(mu);
        on_done(run);
      }
    }
  };

  const int jobs = config.deterministic ? 1 : std::min<int>(config.jobs, static_cast<int>(runs.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return runs;
}

}  // namespace recomp
