#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "recomp/error.hpp"
#include "recomp/model_zoo.hpp"

using namespace recomp;

namespace {

const ModelKind kKinds[] = {ModelKind::kMmi, ModelKind::kSmiBfm, ModelKind::kSmiImage};

PreprocessedRecord random_record(std::mt19937_64& rng, const ModelDims& d) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  PreprocessedRecord r;
  r.bfm_features = Array3<float>(d.K, d.F_b, 2);
  r.image = Array3<float>(d.h, d.w, 3);
  r.target = Array3<float>(d.K, d.F_h, 1);
  for (auto* a : {&r.bfm_features, &r.image, &r.target})
    for (auto& v : a->data) v = u(rng);
  return r;
}

}  // namespace

TEST_CASE("default graphs produce (K, F_h, 1)") {
  const ModelDims d;
  for (ModelKind kind : kKinds) {
    const ModelSpec spec = build_model(kind, d);
    CHECK(model_output(spec) == FeatureShape{64, 12, 1});
  }
  const ModelSpec mmi = build_model(ModelKind::kMmi, d);
  CHECK(bfm_encoder_output(mmi) == FeatureShape{16, 9, 32});
  CHECK(image_encoder_output(mmi) == FeatureShape{16, 9, 32});
}

TEST_CASE("encoder outputs agree for every valid MMI config") {
  for (int K : {4, 8, 64, 256})
    for (int F_b : {1, 4, 9})
      for (int hw : {8, 33, 96}) {
        const ModelSpec s = build_model(ModelKind::kMmi, {K, F_b, 12, hw, hw + 5});
        CHECK(bfm_encoder_output(s) == image_encoder_output(s));
        CHECK(model_output(s) == FeatureShape{K, 12, 1});
      }
}

TEST_CASE("invalid dimensions are rejected by name") {
  try {
    build_model(ModelKind::kMmi, {62, 9, 12, 96, 96});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("K=62") != std::string::npos);
  }
  CHECK_THROWS_AS(build_model(ModelKind::kSmiImage, {64, 9, 12, 4, 96}), ConfigError);
  CHECK_THROWS_AS(build_model(ModelKind::kSmiBfm, {64, 0, 12, 96, 96}), ConfigError);
}

TEST_CASE("structural rules hold for the default graphs") {
  for (ModelKind kind : kKinds) {
    const ModelSpec s = build_model(kind, ModelDims{});
    CHECK_NOTHROW(check_structure(s));
    for (const LayerSpec& l : s.bfm_encoder)
      if (l.kind == LayerKind::kConv2d || l.kind == LayerKind::kMaxPool2d) CHECK(l.kernel_w == 1);
    for (const auto* branch : {&s.bfm_encoder, &s.image_encoder, &s.decoder})
      for (const LayerSpec& l : *branch)
        if (l.kind == LayerKind::kConv2d) CHECK(l.padding == Padding::kSame);
    CHECK(s.decoder.back().kind == LayerKind::kLinear);
    CHECK(s.decoder.back().activation == Activation::kLinear);
  }
  ModelSpec broken = build_model(ModelKind::kSmiBfm, ModelDims{});
  broken.bfm_encoder[0].kernel_w = 3;
  CHECK_THROWS_AS(check_structure(broken), ConfigError);
}

TEST_CASE("parameter counts") {
  LayerSpec conv;
  conv.kind = LayerKind::kConv2d;
  conv.kernel_h = 3;
  conv.kernel_w = 1;
  conv.in_channels = 2;
  conv.channels = 16;
  CHECK(count_params(conv) == 112);
  CHECK(count_params(ModelSpec{}) == 0);

  const ModelDims d;
  const auto mmi = count_params(build_model(ModelKind::kMmi, d));
  const auto img = count_params(build_model(ModelKind::kSmiImage, d));
  const auto bfm = count_params(build_model(ModelKind::kSmiBfm, d));
  CHECK(mmi == 59785);
  CHECK(img == 39577);
  CHECK(bfm == 26857);
  CHECK(mmi > img);
  CHECK(img > bfm);

  for (ModelKind kind : kKinds) {
    Model<float> m(build_model(kind, d), 1);
    CHECK(m.parameter_count() == count_params(m.spec()));
  }
}

TEST_CASE("forward on zero input is finite and shaped") {
  const ModelDims d;
  Model<float> m(build_model(ModelKind::kSmiBfm, d), 3);
  PreprocessedRecord r;
  r.bfm_features = Array3<float>(d.K, d.F_b, 2);
  const Array3<float> y = forward(m, r, nn::Mode::kEval);
  CHECK(y.shape == std::array<int, 3>{64, 12, 1});
  for (float v : y.data) CHECK(std::isfinite(v));
}

TEST_CASE("eval forward is deterministic and batches per record") {
  const ModelDims d{16, 9, 12, 32, 32};
  std::mt19937_64 rng(4);
  std::vector<PreprocessedRecord> rs;
  for (int i = 0; i < 5; ++i) rs.push_back(random_record(rng, d));
  std::vector<const PreprocessedRecord*> ptrs;
  for (const auto& r : rs) ptrs.push_back(&r);

  for (ModelKind kind : kKinds) {
    Model<float> m(build_model(kind, d), 9);
    const auto a = forward(m, ptrs, nn::Mode::kEval);
    const auto b = forward(m, ptrs, nn::Mode::kEval);
    REQUIRE(a.size() == 5);
    CHECK(a == b);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const Array3<float> single = forward(m, rs[i], nn::Mode::kEval);
      for (std::size_t j = 0; j < single.size(); ++j)
        CHECK(single.data[j] == doctest::Approx(a[i].data[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("same seed gives the same initial weights") {
  const ModelSpec s = build_model(ModelKind::kMmi, ModelDims{});
  Model<float> a(s, 5), b(s, 5), c(s, 6);
  CHECK(a.params() == b.params());
  CHECK_FALSE(a.params().entries == c.params().entries);
}

TEST_CASE("MMI output depends on the image when the BFM is fixed") {
  const ModelDims d{16, 9, 12, 32, 32};
  Model<float> m(build_model(ModelKind::kMmi, d), 2);
  std::mt19937_64 rng(5);
  const PreprocessedRecord a = random_record(rng, d);
  PreprocessedRecord b = a;
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) b.image(y, x, 1) = 1.0f - b.image(y, x, 1);
  CHECK(forward(m, a, nn::Mode::kEval) != forward(m, b, nn::Mode::kEval));
}

TEST_CASE("missing modality and mis-shaped records are rejected") {
  const ModelDims d{16, 9, 12, 32, 32};
  Model<float> mmi(build_model(ModelKind::kMmi, d), 1);
  nn::Tensor<float> bfm({2, 1, 16, 9});
  try {
    mmi.forward(&bfm, nullptr, nn::Mode::kEval);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::kModalityMissing);
  }

  std::mt19937_64 rng(1);
  PreprocessedRecord r = random_record(rng, d);
  r.bfm_features = Array3<float>(16, 8, 2);
  try {
    forward(mmi, r, nn::Mode::kEval);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("element axis") != std::string::npos);
  }
  r = random_record(rng, d);
  r.image = Array3<float>(31, 32, 3);
  CHECK_THROWS_WITH_AS(forward(mmi, r, nn::Mode::kEval), doctest::Contains("height axis"),
                       ShapeError);
}

TEST_CASE("BFM encoder is equivariant to element permutations") {
  const ModelDims d{16, 6, 12, 32, 32};
  Model<double> m(build_model(ModelKind::kSmiBfm, d), 3);
  std::mt19937_64 rng(6);
  const nn::Tensor<double> x = gradcheck::random_tensor(rng, {2, 3, d.K, d.F_b});
  std::vector<int> perm(static_cast<std::size_t>(d.F_b));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  nn::Tensor<double> xp(x.shape());
  for (int c = 0; c < 2; ++c)
    for (int n = 0; n < 3; ++n)
      for (int k = 0; k < d.K; ++k)
        for (int e = 0; e < d.F_b; ++e) xp.at(c, n, k, e) = x.at(c, n, k, perm[e]);

  for (nn::Mode mode : {nn::Mode::kEval, nn::Mode::kTrain}) {
    const nn::Tensor<double> y = m.encode(&x, nullptr, mode).first;
    const nn::Tensor<double> yp = m.encode(&xp, nullptr, mode).first;
    const nn::Shape s = y.shape();
    for (int c = 0; c < s.c; ++c)
      for (int n = 0; n < s.n; ++n)
        for (int k = 0; k < s.h; ++k)
          for (int e = 0; e < s.w; ++e)
            CHECK(yp.at(c, n, k, e) == doctest::Approx(y.at(c, n, k, perm[e])).epsilon(1e-12));
  }
}

TEST_CASE("whole-model gradients match finite differences") {
  const ModelDims d{8, 3, 4, 16, 16};
  ArchConfig arch;
  arch.bfm_channels = {3, 4};
  arch.image_channels = {3, 4, 4};
  arch.decoder_wide = 5;
  arch.decoder_narrow = 3;
  Model<double> m(build_model(ModelKind::kMmi, d, arch), 8);
  std::mt19937_64 rng(9);
  const nn::Tensor<double> bfm = gradcheck::random_tensor(rng, {2, 2, d.K, d.F_b});
  const nn::Tensor<double> img = gradcheck::random_tensor(rng, {3, 2, d.h, d.w});
  const nn::Tensor<double> w = gradcheck::random_tensor(rng, {1, 2, d.K, d.F_h});
  const auto loss = [&](const nn::Tensor<double>& b, const nn::Tensor<double>& i) {
    const nn::Tensor<double> y = m.forward(&b, &i, nn::Mode::kTrain);
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += y.data()[j] * w.data()[j];
    return s;
  };

  for (auto* p : m.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  m.forward(&bfm, &img, nn::Mode::kTrain);
  const auto [db, di] = m.backward(w);

  const double h = 1e-6;
  gradcheck::Result r;
  nn::Tensor<double> bp = bfm;
  for (std::size_t j = 0; j < bp.size(); j += 3) {
    const double o = bp.data()[j];
    bp.data()[j] = o + h;
    const double up = loss(bp, img);
    bp.data()[j] = o - h;
    const double dn = loss(bp, img);
    bp.data()[j] = o;
    gradcheck::record(r, db.data()[j], (up - dn) / (2 * h), "bfm input", 1e-4);
  }
  nn::Tensor<double> ip = img;
  for (std::size_t j = 0; j < ip.size(); j += 17) {
    const double o = ip.data()[j];
    ip.data()[j] = o + h;
    const double up = loss(bfm, ip);
    ip.data()[j] = o - h;
    const double dn = loss(bfm, ip);
    ip.data()[j] = o;
    gradcheck::record(r, di.data()[j], (up - dn) / (2 * h), "image input", 1e-4);
  }
  std::vector<std::vector<double>> grads;
  for (auto* p : m.parameters()) grads.push_back(p->grad);
  const auto params = m.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& v = params[p]->value;
    for (std::size_t j = 0; j < v.size(); j += 5) {
      const double o = v[j];
      v[j] = o + h;
      const double up = loss(bfm, img);
      v[j] = o - h;
      const double dn = loss(bfm, img);
      v[j] = o;
      gradcheck::record(r, grads[p][j], (up - dn) / (2 * h), params[p]->name, 1e-4);
    }
  }
  INFO(r.where);
  CHECK(r.checked > 100);
  CHECK(r.worst <= 1e-4);
}

TEST_CASE("params round-trip through load_params") {
  const ModelDims d{16, 9, 12, 32, 32};
  Model<float> a(build_model(ModelKind::kMmi, d), 1);
  Model<float> b(build_model(ModelKind::kMmi, d), 2);
  b.load_params(a.params());
  CHECK(b.params() == a.params());
  std::mt19937_64 rng(3);
  const PreprocessedRecord r = random_record(rng, d);
  CHECK(forward(a, r, nn::Mode::kEval) == forward(b, r, nn::Mode::kEval));

  ModelParams bad = a.params();
  bad.entries.pop_back();
  CHECK_THROWS_AS(b.load_params(bad), ShapeError);
}

TEST_CASE("model kind names parse both spellings") {
  for (ModelKind k : kKinds) {
    CHECK(parse_model_kind(cli_name(k)) == k);
    CHECK(parse_model_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_model_kind("cnn"), ConfigError);
}
