#include "recomp/model_zoo.hpp"

#include <algorithm>
#include <map>

#include "recomp/error.hpp"

namespace recomp {
namespace {

LayerSpec conv(int in, int out, int kh, int kw, Activation act = Activation::kLinear) {
  LayerSpec l;
  l.kind = LayerKind::kConv2d;
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.in_channels = in;
  l.channels = out;
  l.padding = Padding::kSame;
  l.activation = act;
  return l;
}

LayerSpec batchnorm(int channels, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  l.in_channels = channels;
  l.channels = channels;
  l.activation = act;
  return l;
}

LayerSpec window(LayerKind kind, int kh, int kw) {
  LayerSpec l;
  l.kind = kind;
  l.kernel_h = kh;
  l.kernel_w = kw;
  return l;
}

LayerSpec resize(int h, int w) {
  LayerSpec l;
  l.kind = LayerKind::kResize;
  l.out_h = h;
  l.out_w = w;
  return l;
}

/// Activation that ends the conv block starting at layers[i]: the conv's own,
/// or that of a directly following batch-norm.
Activation block_activation(const std::vector<LayerSpec>& layers, std::size_t i) {
  if (layers[i].activation == Activation::kRelu) return Activation::kRelu;
  if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::kBatchNorm)
    return layers[i + 1].activation;
  return Activation::kLinear;
}

[[noreturn]] void bad_dim(const std::string& name, int value, const std::string& rule) {
  throw ConfigError("build_model: " + name + "=" + std::to_string(value) + " " + rule);
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMmi: return "MMI";
    case ModelKind::kSmiBfm: return "SMI-BFM";
    case ModelKind::kSmiImage: return "SMI-image";
  }
  return "?";
}

std::string cli_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMmi: return "mmi";
    case ModelKind::kSmiBfm: return "smi-bfm";
    case ModelKind::kSmiImage: return "smi-image";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mmi") return ModelKind::kMmi;
  if (lower == "smi-bfm") return ModelKind::kSmiBfm;
  if (lower == "smi-image") return ModelKind::kSmiImage;
  throw ConfigError("unknown model kind '" + s + "' (expected mmi, smi-bfm or smi-image)");
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kUpsample2d: return "upsample2d";
    case LayerKind::kResize: return "resize";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kLinear: return "linear";
  }
  return "?";
}

ModelSpec build_model(ModelKind kind, const ModelDims& dims, const ArchConfig& arch) {
  if (dims.K < 4 || dims.K % 4 != 0)
    bad_dim("K", dims.K, "must be a positive multiple of 4 (two pooling stages on subcarriers)");
  if (dims.F_b < 1) bad_dim("F_b", dims.F_b, "must be positive");
  if (dims.F_h < 1) bad_dim("F_h", dims.F_h, "must be positive");
  if (arch.bfm_channels.size() != 2)
    throw ConfigError("build_model: the BFM encoder has exactly two stages");
  if (arch.image_channels.empty()) throw ConfigError("build_model: empty image encoder");
  const int image_stages = static_cast<int>(arch.image_channels.size());
  if (dims.h >> image_stages < 1) bad_dim("h", dims.h, "too small for the image encoder");
  if (dims.w >> image_stages < 1) bad_dim("w", dims.w, "too small for the image encoder");

  ModelSpec spec;
  spec.kind = kind;
  spec.dims = dims;

  const bool use_bfm = kind != ModelKind::kSmiImage;
  const bool use_image = kind != ModelKind::kSmiBfm;

  if (use_bfm) {
    int in = 2;
    for (int ch : arch.bfm_channels) {
      spec.bfm_encoder.push_back(conv(in, ch, 3, 1));
      spec.bfm_encoder.push_back(batchnorm(ch, Activation::kRelu));
      spec.bfm_encoder.push_back(window(LayerKind::kMaxPool2d, 2, 1));
      in = ch;
    }
  }
  if (use_image) {
    int in = 3;
    for (int ch : arch.image_channels) {
      spec.image_encoder.push_back(conv(in, ch, 3, 3));
      spec.image_encoder.push_back(batchnorm(ch, Activation::kRelu));
      spec.image_encoder.push_back(window(LayerKind::kMaxPool2d, 2, 2));
      in = ch;
    }
    spec.image_encoder.push_back(resize(dims.K / 4, dims.F_b));
  }

  int dec_in = 0;
  if (use_bfm) dec_in += arch.bfm_channels.back();
  if (use_image) dec_in += arch.image_channels.back();
  if (kind == ModelKind::kMmi) {
    if (arch.bfm_channels.back() != arch.image_channels.back())
      throw ConfigError("build_model: MMI encoders must end with the same channel count");
    LayerSpec cat;
    cat.kind = LayerKind::kConcat;
    cat.in_channels = arch.bfm_channels.back();
    cat.channels = dec_in;
    spec.decoder.push_back(cat);
  }
  spec.decoder.push_back(conv(dec_in, arch.decoder_wide, 3, 3));
  spec.decoder.push_back(batchnorm(arch.decoder_wide, Activation::kRelu));
  spec.decoder.push_back(window(LayerKind::kUpsample2d, 2, 1));
  spec.decoder.push_back(conv(arch.decoder_wide, arch.decoder_narrow, 3, 1));
  spec.decoder.push_back(batchnorm(arch.decoder_narrow, Activation::kRelu));
  spec.decoder.push_back(window(LayerKind::kUpsample2d, 2, 1));
  spec.decoder.push_back(conv(arch.decoder_narrow, 1, 3, 1, Activation::kLinear));
  LayerSpec linear;
  linear.kind = LayerKind::kLinear;
  linear.in_channels = dims.F_b;
  linear.channels = dims.F_h;
  spec.decoder.push_back(linear);

  check_structure(spec);
  return spec;
}

std::int64_t count_params(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConv2d:
      return static_cast<std::int64_t>(l.kernel_h) * l.kernel_w * l.in_channels * l.channels +
             l.channels;
    case LayerKind::kBatchNorm: return 2 * static_cast<std::int64_t>(l.channels);
    case LayerKind::kLinear:
      return static_cast<std::int64_t>(l.in_channels) * l.channels + l.channels;
    default: return 0;
  }
}

std::int64_t count_params(const ModelSpec& spec) {
  std::int64_t total = 0;
  for (const auto* branch : {&spec.bfm_encoder, &spec.image_encoder, &spec.decoder})
    for (const LayerSpec& l : *branch) total += count_params(l);
  return total;
}

FeatureShape branch_output(const std::vector<LayerSpec>& layers, FeatureShape s) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const auto mismatch = [&](const std::string& axis, int got, int want) {
      throw ShapeError(to_string(l.kind) + " layer " + std::to_string(i) + ": " + axis + " is " +
                       std::to_string(got) + ", expected " + std::to_string(want));
    };
    switch (l.kind) {
      case LayerKind::kConv2d:
        if (s.c != l.in_channels) mismatch("channel axis", s.c, l.in_channels);
        s.c = l.channels;
        break;
      case LayerKind::kBatchNorm:
        if (s.c != l.channels) mismatch("channel axis", s.c, l.channels);
        break;
      case LayerKind::kMaxPool2d:
        s.h /= l.kernel_h;
        s.w /= l.kernel_w;
        if (s.h < 1 || s.w < 1) throw ShapeError("maxpool2d layer " + std::to_string(i) + ": empty output");
        break;
      case LayerKind::kUpsample2d:
        s.h *= l.kernel_h;
        s.w *= l.kernel_w;
        break;
      case LayerKind::kResize:
        s.h = l.out_h;
        s.w = l.out_w;
        break;
      case LayerKind::kConcat:
        if (s.c != l.channels) mismatch("channel axis", s.c, l.channels);
        break;
      case LayerKind::kLinear:
        if (s.w != l.in_channels) mismatch("element axis", s.w, l.in_channels);
        s.w = l.channels;
        break;
    }
  }
  return s;
}

FeatureShape bfm_encoder_output(const ModelSpec& spec) {
  return branch_output(spec.bfm_encoder, {spec.dims.K, spec.dims.F_b, 2});
}

FeatureShape image_encoder_output(const ModelSpec& spec) {
  return branch_output(spec.image_encoder, {spec.dims.h, spec.dims.w, 3});
}

FeatureShape model_output(const ModelSpec& spec) {
  FeatureShape in;
  if (spec.uses_bfm() && spec.uses_image()) {
    const FeatureShape b = bfm_encoder_output(spec);
    const FeatureShape i = image_encoder_output(spec);
    if (b.h != i.h || b.w != i.w)
      throw ShapeError("concat: encoder outputs (" + std::to_string(b.h) + ", " +
                       std::to_string(b.w) + ") and (" + std::to_string(i.h) + ", " +
                       std::to_string(i.w) + ") differ");
    in = {b.h, b.w, b.c + i.c};
  } else if (spec.uses_bfm()) {
    in = bfm_encoder_output(spec);
  } else {
    in = image_encoder_output(spec);
  }
  return branch_output(spec.decoder, in);
}

void check_structure(const ModelSpec& spec) {
  const auto fail = [](const std::string& what) { throw ConfigError("model structure: " + what); };

  for (const LayerSpec& l : spec.bfm_encoder)
    if ((l.kind == LayerKind::kConv2d || l.kind == LayerKind::kMaxPool2d) && l.kernel_w != 1)
      fail("BFM encoder kernels must be 1 along the element axis");

  // Last conv of the whole graph sits in the decoder.
  const LayerSpec* last_conv = nullptr;
  for (const LayerSpec& l : spec.decoder)
    if (l.kind == LayerKind::kConv2d) last_conv = &l;
  if (last_conv == nullptr) fail("decoder has no convolution");

  for (const auto* branch : {&spec.bfm_encoder, &spec.image_encoder, &spec.decoder}) {
    for (std::size_t i = 0; i < branch->size(); ++i) {
      const LayerSpec& l = (*branch)[i];
      if (l.kind != LayerKind::kConv2d) continue;
      if (l.padding != Padding::kSame) fail("every conv2d uses same padding");
      const Activation act = block_activation(*branch, i);
      if (&l == last_conv) {
        if (act != Activation::kLinear) fail("the last conv2d must be linear");
      } else if (act != Activation::kRelu) {
        fail("conv2d blocks other than the last must be relu-activated");
      }
    }
  }
  if (!spec.decoder.empty() && spec.decoder.back().kind == LayerKind::kLinear &&
      spec.decoder.back().activation != Activation::kLinear)
    fail("the final linear map must be linear");

  if (spec.kind == ModelKind::kMmi) {
    if (!spec.uses_bfm() || !spec.uses_image()) fail("MMI needs both encoders");
    if (!(bfm_encoder_output(spec) == image_encoder_output(spec)))
      fail("MMI encoder outputs must have the same shape");
  }
  model_output(spec);
}

// ------------------------------------------------------------------ Model

template <typename T>
Model<T>::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  check_structure(spec_);
  std::mt19937_64 rng(seed);
  build_branch(bfm_, spec_.bfm_encoder, rng);
  build_branch(image_, spec_.image_encoder, rng);
  build_branch(decoder_, spec_.decoder, rng);
  if (spec_.uses_bfm()) bfm_channels_out_ = bfm_encoder_output(spec_).c;
}

template <typename T>
void Model<T>::build_branch(Branch& branch, const std::vector<LayerSpec>& layers,
                            std::mt19937_64& rng) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::kConv2d: {
        auto c = std::make_unique<nn::Conv2d<T>>(l.in_channels, l.channels, l.kernel_h, l.kernel_w);
        // He-uniform ahead of a relu, LeCun-uniform otherwise.
        c->init_uniform(rng, block_activation(layers, i) == Activation::kRelu ? 6.0 : 3.0);
        branch.net.add(std::move(c));
        break;
      }
      case LayerKind::kBatchNorm:
        branch.net.add(std::make_unique<nn::BatchNorm2d<T>>(l.channels, l.activation == Activation::kRelu));
        continue;
      case LayerKind::kMaxPool2d:
        branch.net.add(std::make_unique<nn::MaxPool2d<T>>(l.kernel_h, l.kernel_w));
        break;
      case LayerKind::kUpsample2d:
        branch.net.add(std::make_unique<nn::Upsample2d<T>>(l.kernel_h, l.kernel_w));
        break;
      case LayerKind::kResize:
        branch.net.add(std::make_unique<nn::Resize2d<T>>(l.out_h, l.out_w));
        break;
      case LayerKind::kConcat:
        continue;  // handled in forward()
      case LayerKind::kLinear: {
        auto lin = std::make_unique<nn::ElementLinear<T>>(l.in_channels, l.channels);
        lin->init_uniform(rng, 3.0);
        branch.net.add(std::move(lin));
        break;
      }
    }
    if (l.activation == Activation::kRelu) branch.net.add(std::make_unique<nn::ReLU<T>>());
  }
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> Model<T>::encode(const nn::Tensor<T>* bfm,
                                                         const nn::Tensor<T>* image,
                                                         nn::Mode mode) {
  std::pair<nn::Tensor<T>, nn::Tensor<T>> out;
  if (spec_.uses_bfm()) {
    if (bfm == nullptr)
      throw DataError(DataError::Kind::kModalityMissing,
                      to_string(spec_.kind) + " needs BFM input");
    out.first = bfm_.net.forward(*bfm, mode);
  }
  if (spec_.uses_image()) {
    if (image == nullptr)
      throw DataError(DataError::Kind::kModalityMissing,
                      to_string(spec_.kind) + " needs image input");
    out.second = image_.net.forward(*image, mode);
  }
  return out;
}

template <typename T>
nn::Tensor<T> Model<T>::forward(const nn::Tensor<T>* bfm, const nn::Tensor<T>* image,
                                nn::Mode mode) {
  auto [b, i] = encode(bfm, image, mode);
  if (spec_.uses_bfm() && spec_.uses_image())
    return decoder_.net.forward(nn::concat_channels(b, i), mode);
  return decoder_.net.forward(spec_.uses_bfm() ? b : i, mode);
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> Model<T>::backward(const nn::Tensor<T>& grad_out) {
  nn::Tensor<T> g = decoder_.net.backward(grad_out);
  std::pair<nn::Tensor<T>, nn::Tensor<T>> out;
  if (spec_.uses_bfm() && spec_.uses_image()) {
    nn::Tensor<T> gb, gi;
    nn::split_channels(g, bfm_channels_out_, gb, gi);
    out.first = bfm_.net.backward(gb);
    out.second = image_.net.backward(gi);
  } else if (spec_.uses_bfm()) {
    out.first = bfm_.net.backward(g);
  } else {
    out.second = image_.net.backward(g);
  }
  return out;
}

template <typename T>
std::vector<nn::Parameter<T>*> Model<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (Branch* br : {&bfm_, &image_, &decoder_})
    for (auto& layer : br->net.layers())
      for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::int64_t Model<T>::parameter_count() {
  std::int64_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::int64_t>(p->value.size());
  return n;
}

template <typename T>
ModelParams Model<T>::params() const {
  ModelParams out;
  out.seed = seed_;
  for (const Branch* br : {&bfm_, &image_, &decoder_}) {
    const auto& layers = br->net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string prefix = br->name + "." + std::to_string(i) + ".";
      for (auto* p : layers[i]->parameters())
        out.entries.push_back({prefix + p->name, {p->value.begin(), p->value.end()}, true});
      for (auto* b : layers[i]->buffers())
        out.entries.push_back({prefix + b->name, {b->value.begin(), b->value.end()}, false});
    }
  }
  return out;
}

template <typename T>
void Model<T>::load_params(const ModelParams& params) {
  std::map<std::string, const ModelParams::Entry*> by_name;
  for (const auto& e : params.entries) by_name[e.name] = &e;
  const auto assign = [&](const std::string& name, std::vector<T>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("load_params: missing entry " + name);
    if (it->second->value.size() != dst.size())
      throw ShapeError("load_params: " + name + " has " + std::to_string(it->second->value.size()) +
                       " values, expected " + std::to_string(dst.size()));
    std::transform(it->second->value.begin(), it->second->value.end(), dst.begin(),
                   [](float v) { return static_cast<T>(v); });
  };
  for (Branch* br : {&bfm_, &image_, &decoder_}) {
    auto& layers = br->net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string prefix = br->name + "." + std::to_string(i) + ".";
      for (auto* p : layers[i]->parameters()) assign(prefix + p->name, p->value);
      for (auto* b : layers[i]->buffers()) assign(prefix + b->name, b->value);
    }
  }
  seed_ = params.seed;
}

template class Model<float>;
template class Model<double>;

// -------------------------------------------------------------- batching

template <typename T>
nn::Tensor<T> pack_bfm(std::span<const PreprocessedRecord* const> batch) {
  const auto& first = batch.front()->bfm_features;
  const int K = first.shape[0];
  const int F = first.shape[1];
  const int B = static_cast<int>(batch.size());
  nn::Tensor<T> out({2, B, K, F});
  for (int b = 0; b < B; ++b) {
    const auto& a = batch[b]->bfm_features;
    for (int k = 0; k < K; ++k)
      for (int e = 0; e < F; ++e)
        for (int ch = 0; ch < 2; ++ch) out.at(ch, b, k, e) = static_cast<T>(a(k, e, ch));
  }
  return out;
}

template <typename T>
nn::Tensor<T> pack_images(std::span<const PreprocessedRecord* const> batch) {
  const auto& first = batch.front()->image;
  const int H = first.shape[0];
  const int W = first.shape[1];
  const int B = static_cast<int>(batch.size());
  nn::Tensor<T> out({3, B, H, W});
  for (int b = 0; b < B; ++b) {
    const auto& a = batch[b]->image;
    const float* src = a.data.data();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x, src += 3)
        for (int ch = 0; ch < 3; ++ch) out.at(ch, b, y, x) = static_cast<T>(src[ch]);
  }
  return out;
}

template <typename T>
nn::Tensor<T> pack_targets(std::span<const PreprocessedRecord* const> batch) {
  const auto& first = batch.front()->target;
  const int K = first.shape[0];
  const int F = first.shape[1];
  const int B = static_cast<int>(batch.size());
  nn::Tensor<T> out({1, B, K, F});
  for (int b = 0; b < B; ++b)
    std::transform(batch[b]->target.data.begin(), batch[b]->target.data.end(), out.plane(0, b),
                   [](float v) { return static_cast<T>(v); });
  return out;
}

template nn::Tensor<float> pack_bfm<float>(std::span<const PreprocessedRecord* const>);
template nn::Tensor<double> pack_bfm<double>(std::span<const PreprocessedRecord* const>);
template nn::Tensor<float> pack_images<float>(std::span<const PreprocessedRecord* const>);
template nn::Tensor<double> pack_images<double>(std::span<const PreprocessedRecord* const>);
template nn::Tensor<float> pack_targets<float>(std::span<const PreprocessedRecord* const>);
template nn::Tensor<double> pack_targets<double>(std::span<const PreprocessedRecord* const>);

void check_record(const ModelSpec& spec, const PreprocessedRecord& r) {
  const auto expect = [](const std::string& what, const std::string& axis, int got, int want) {
    if (got != want)
      throw ShapeError(what + ": " + axis + " axis is " + std::to_string(got) + ", expected " +
                       std::to_string(want));
  };
  const ModelDims& d = spec.dims;
  if (spec.uses_bfm()) {
    expect("bfm_features", "subcarrier", r.bfm_features.shape[0], d.K);
    expect("bfm_features", "element", r.bfm_features.shape[1], d.F_b);
    expect("bfm_features", "channel", r.bfm_features.shape[2], 2);
  }
  if (spec.uses_image()) {
    expect("image", "height", r.image.shape[0], d.h);
    expect("image", "width", r.image.shape[1], d.w);
    expect("image", "channel", r.image.shape[2], 3);
  }
}

std::vector<Array3<float>> forward(Model<float>& model,
                                   std::span<const PreprocessedRecord* const> batch,
                                   nn::Mode mode) {
  if (batch.empty()) return {};
  for (const auto* r : batch) check_record(model.spec(), *r);
  nn::Tensor<float> b, i;
  if (model.spec().uses_bfm()) b = pack_bfm<float>(batch);
  if (model.spec().uses_image()) i = pack_images<float>(batch);
  const nn::Tensor<float> y = model.forward(model.spec().uses_bfm() ? &b : nullptr,
                                            model.spec().uses_image() ? &i : nullptr, mode);
  const nn::Shape s = y.shape();
  std::vector<Array3<float>> out;
  out.reserve(batch.size());
  for (int n = 0; n < s.n; ++n) {
    Array3<float> a(s.h, s.w, 1);
    std::copy(y.plane(0, n), y.plane(0, n) + s.plane(), a.data.begin());
    out.push_back(std::move(a));
  }
  return out;
}

Array3<float> forward(Model<float>& model, const PreprocessedRecord& record, nn::Mode mode) {
  const PreprocessedRecord* one[] = {&record};
  return forward(model, one, mode).front();
}

}  // namespace recomp
