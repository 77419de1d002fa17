#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "recomp/error.hpp"
#include "recomp/train_loop.hpp"

using namespace recomp;

TEST_CASE("split sizes follow the ratio with the remainder in training") {
  const std::array<double, 3> r{0.72, 0.18, 0.10};
  const auto a = split_dataset(24000, r, 0);
  CHECK(a.train.size() == 17280);
  CHECK(a.val.size() == 4320);
  CHECK(a.test.size() == 2400);
  const auto b = split_dataset(2000, r, 0);
  CHECK(b.train.size() == 1440);
  CHECK(b.val.size() == 360);
  CHECK(b.test.size() == 200);
  const auto c = split_dataset(17, r, 0);
  CHECK(c.val.size() == 3);
  CHECK(c.test.size() == 1);
  CHECK(c.train.size() == 13);
  CHECK_THROWS_AS(split_dataset(9, r, 0), ConfigError);
}

TEST_CASE("splits partition the indices and depend only on the seed") {
  const std::array<double, 3> r{0.72, 0.18, 0.10};
  for (std::int64_t n : {10, 57, 1000, 2001}) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
      const auto s = split_dataset(n, r, seed);
      std::vector<std::int64_t> all;
      for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(all.end(), part->begin(), part->end());
      std::sort(all.begin(), all.end());
      std::vector<std::int64_t> want(static_cast<std::size_t>(n));
      std::iota(want.begin(), want.end(), 0);
      CHECK(all == want);
      CHECK(split_dataset(n, r, seed) == s);
    }
  }
  CHECK_FALSE(split_dataset(1000, r, 1) == split_dataset(1000, r, 2));
}

TEST_CASE("strictly increasing validation loss stops at epoch 11 with best epoch 1") {
  std::vector<double> loss(100);
  for (int i = 0; i < 100; ++i) loss[i] = 1.0 + i;
  CHECK(stopping_epoch(loss, 10, 100) == 11);
  EarlyStopping es(10);
  int stop = 0;
  for (int e = 1; e <= 100 && stop == 0; ++e)
    if (es.update(e, loss[e - 1]).stop) stop = e;
  CHECK(stop == 11);
  CHECK(es.best_epoch() == 1);
  CHECK(es.best_loss() == 1.0);
}

TEST_CASE("steadily improving validation loss runs every epoch") {
  std::vector<double> loss(100);
  for (int i = 0; i < 100; ++i) loss[i] = 1.0 / (1 + i);
  CHECK(stopping_epoch(loss, 10, 100) == 100);
}

TEST_CASE("ties with the best count as no worse; the first minimum is best") {
  EarlyStopping es(3);
  CHECK(es.update(1, 1.0).new_best);
  CHECK_FALSE(es.update(2, 1.0).new_best);
  CHECK_FALSE(es.update(3, 2.0).stop);
  CHECK_FALSE(es.update(4, 1.0).stop);
  CHECK_FALSE(es.update(5, 3.0).stop);
  CHECK_FALSE(es.update(6, 3.0).stop);
  CHECK(es.update(7, 3.0).stop);
  CHECK(es.best_epoch() == 1);
}

TEST_CASE("early stopping agrees with the brute-force definition") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const auto loss = testgen::random_losses(rng, 100);
    CHECK(stopping_epoch(loss, 10, 100) == testgen::brute_force_stop(loss, 10));
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.split_ratio = {0.7, 0.2, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.patience = 101;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = TrainConfig{};
  apply_train_overrides(c, {{"batch_size", "32"}, {"seeds", "3,4"}, {"split_ratio", "0.8,0.1,0.1"}});
  CHECK(c.batch_size == 32);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.split_ratio[0] == 0.8);
  CHECK_THROWS_WITH_AS(apply_train_overrides(c, {{"epochz", "3"}, {"lrate", "1"}}),
                       doctest::Contains("epochz, lrate"), ConfigError);
}

namespace {

Dataset small_dataset(int n, bool images = true) {
  SceneConfig c;
  c.K = 16;
  c.image_height = 32;
  c.image_width = 32;
  Dataset ds;
  ds.manifest.K = c.K;
  ds.manifest.N = c.N;
  ds.manifest.M = c.M;
  ds.manifest.S_cols = std::min(c.M, c.N);
  ds.manifest.image_height = c.image_height;
  ds.manifest.image_width = c.image_width;
  ds.manifest.has_bfm = true;
  ds.manifest.has_images = images;
  ds.manifest.sample_count = n;
  for (int t = 0; t < n; ++t) {
    const ScenePair p = generate_sample(c, t);
    ds.csi.push_back(p.csi);
    ds.bfm.push_back(emulate_bfm(p.csi));
    if (images) ds.images.push_back(p.state.image);
  }
  return ds;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.max_epochs = 12;
  c.patience = 10;
  c.image_h = 32;
  c.image_w = 32;
  c.seeds = {1, 2};
  return c;
}

}  // namespace

TEST_CASE("prepared data normalizes with training statistics only") {
  const Dataset ds = small_dataset(60);
  const auto split = split_dataset(60, {0.72, 0.18, 0.10}, 3);
  const TrainData data = prepare_training_data(ds, split, 32, 32);
  CHECK(data.F_b == 9);
  CHECK(data.F_h == 12);
  std::vector<Array3<float>> raw;
  for (const auto& c : ds.csi) raw.push_back(flatten_csi_amplitude(c));
  CHECK(data.stats == fit_norm_stats(raw, split.train));
  for (auto i : split.train)
    for (float v : data.records[static_cast<std::size_t>(i)].target.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
}

TEST_CASE("injected validation losses drive stopping and best-weight restoration") {
  const Dataset ds = small_dataset(60);
  const TrainData data = prepare_training_data(ds, split_dataset(60, {0.72, 0.18, 0.10}, 0), 32, 32);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 100;

  ModelParams epoch1;
  TrainHooks hooks;
  hooks.val_loss_override = [](int epoch, double) { return 1.0 + epoch; };
  RunRecord rec = train(ModelKind::kSmiBfm, data, cfg, 4, hooks);
  CHECK(rec.stop_epoch == 11);
  CHECK(rec.best_epoch == 1);
  CHECK(rec.stopped_early);
  CHECK(rec.epochs.size() == 11);
  CHECK(rec.best_val_loss == 2.0);

  // The returned weights are the epoch-1 weights: rerun one epoch and compare.
  TrainConfig one = cfg;
  one.max_epochs = 1;
  one.patience = 1;
  const RunRecord first = train(ModelKind::kSmiBfm, data, one, 4);
  CHECK(first.best_params == rec.best_params);
}

TEST_CASE("diverging training reports the epoch") {
  const Dataset ds = small_dataset(40);
  const TrainData data = prepare_training_data(ds, split_dataset(40, {0.72, 0.18, 0.10}, 0), 32, 32);
  TrainHooks hooks;
  hooks.val_loss_override = [](int epoch, double v) {
    return epoch == 3 ? std::numeric_limits<double>::quiet_NaN() : v;
  };
  try {
    train(ModelKind::kSmiBfm, data, quick_config(), 1, hooks);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 3);
  }
}

TEST_CASE("training is deterministic per seed and lowers the loss") {
  const Dataset ds = small_dataset(80);
  const TrainData data = prepare_training_data(ds, split_dataset(80, {0.72, 0.18, 0.10}, 0), 32, 32);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 5;
  cfg.patience = 5;
  const RunRecord a = train(ModelKind::kMmi, data, cfg, 7);
  const RunRecord b = train(ModelKind::kMmi, data, cfg, 7);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].val_loss == b.epochs[i].val_loss);
  }
  CHECK(a.best_params == b.best_params);
  CHECK(a.epochs.back().train_loss < a.epochs.front().train_loss);
  const double best = std::min_element(a.epochs.begin(), a.epochs.end(), [](auto& x, auto& y) {
                        return x.val_loss < y.val_loss;
                      })->val_loss;
  CHECK(a.best_val_loss == best);
}

TEST_CASE("protocol runs every kind and seed on one split") {
  const Dataset ds = small_dataset(60);
  const TrainData data = prepare_training_data(ds, split_dataset(60, {0.72, 0.18, 0.10}, 0), 32, 32);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 2;
  cfg.patience = 2;
  const ModelKind kinds[] = {ModelKind::kMmi, ModelKind::kSmiBfm, ModelKind::kSmiImage};
  int callbacks = 0;
  const auto runs = run_protocol(data, kinds, cfg, [&](const ProtocolRun&) { ++callbacks; });
  CHECK(runs.size() == 6);
  CHECK(callbacks == 6);
  std::set<std::pair<int, std::uint64_t>> seen;
  for (const auto& r : runs) {
    CHECK(r.ok);
    seen.insert({static_cast<int>(r.kind), r.seed});
  }
  CHECK(seen.size() == 6);

  cfg.jobs = 3;
  cfg.deterministic = false;
  const auto parallel = run_protocol(data, kinds, cfg);
  for (std::size_t i = 0; i < runs.size(); ++i)
    CHECK(parallel[i].record.best_val_loss == runs[i].record.best_val_loss);
}

TEST_CASE("image models need images") {
  const Dataset ds = small_dataset(30, false);
  const TrainData data = prepare_training_data(ds, split_dataset(30, {0.72, 0.18, 0.10}, 0), 32, 32);
  CHECK_NOTHROW(require_modalities(ModelKind::kSmiBfm, data));
  for (ModelKind k : {ModelKind::kMmi, ModelKind::kSmiImage}) {
    try {
      require_modalities(k, data);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.kind() == DataError::Kind::kModalityMissing);
      CHECK(std::string(e.what()).find("modality missing") != std::string::npos);
    }
  }
  const ModelKind kinds[] = {ModelKind::kMmi, ModelKind::kSmiBfm};
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 1;
  cfg.patience = 1;
  cfg.seeds = {1};
  const auto runs = run_protocol(data, kinds, cfg);
  CHECK_FALSE(runs[0].ok);
  CHECK(runs[1].ok);
}
