#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recomp/array3.hpp"
#include "recomp/nn/layers.hpp"
#include "recomp/preprocess.hpp"

namespace recomp {

enum class ModelKind { kMmi, kSmiBfm, kSmiImage };

std::string to_string(ModelKind kind);          // "MMI", "SMI-BFM", "SMI-image"
std::string cli_name(ModelKind kind);           // "mmi", "smi-bfm", "smi-image"
ModelKind parse_model_kind(const std::string& s);  // accepts either spelling

enum class LayerKind { kConv2d, kMaxPool2d, kBatchNorm, kUpsample2d, kResize, kConcat, kLinear };
enum class Activation { kLinear, kRelu };
enum class Padding { kNone, kSame };

std::string to_string(LayerKind kind);

/// One layer of a model graph. `kernel_*` is the convolution kernel, pooling
/// window, or upsampling factor; `channels` is the output channel count (or
/// output features for kLinear); `out_h/out_w` is the resize target.
/// `activation` is applied after the layer.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv2d;
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 0;
  int channels = 0;
  Padding padding = Padding::kNone;
  Activation activation = Activation::kLinear;
  int out_h = 0;
  int out_w = 0;
};

struct ModelDims {
  int K = 64;
  int F_b = 9;
  int F_h = 12;
  int h = 96;
  int w = 96;
};

/// Channel widths of the default graph.
struct ArchConfig {
  std::vector<int> bfm_channels{16, 32};
  std::vector<int> image_channels{16, 32, 32};
  int decoder_wide = 64;
  int decoder_narrow = 32;
};

/// Model graph as three branches. For MMI the decoder starts with a concat
/// layer joining both encoder outputs along the channel axis.
struct ModelSpec {
  ModelKind kind = ModelKind::kMmi;
  ModelDims dims;
  std::vector<LayerSpec> bfm_encoder;
  std::vector<LayerSpec> image_encoder;
  std::vector<LayerSpec> decoder;

  bool uses_bfm() const { return !bfm_encoder.empty(); }
  bool uses_image() const { return !image_encoder.empty(); }
};

/// Activation shape as (rows, cols, channels), i.e. (subcarrier, element, feature).
struct FeatureShape {
  int h = 0;
  int w = 0;
  int c = 0;
  bool operator==(const FeatureShape&) const = default;
};

ModelSpec build_model(ModelKind kind, const ModelDims& dims, const ArchConfig& arch = {});

std::int64_t count_params(const LayerSpec& layer);
std::int64_t count_params(const ModelSpec& spec);

/// Output shape of a branch given its input shape; throws ShapeError on mismatch.
FeatureShape branch_output(const std::vector<LayerSpec>& layers, FeatureShape in);
FeatureShape bfm_encoder_output(const ModelSpec& spec);
FeatureShape image_encoder_output(const ModelSpec& spec);
FeatureShape model_output(const ModelSpec& spec);

/// Throws ConfigError if the graph breaks a structural rule (element-axis
/// kernels of 1 in the BFM encoder, same padding everywhere, relu on every conv
/// block except the last, equal encoder outputs for MMI).
void check_structure(const ModelSpec& spec);

/// Weights and batch-norm statistics by name, plus the initialization seed.
struct ModelParams {
  std::uint64_t seed = 0;
  struct Entry {
    std::string name;
    std::vector<float> value;
    bool trainable = true;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  bool operator==(const ModelParams&) const = default;
};

/// Runnable instance of a ModelSpec. Inputs are channel-major batches:
/// BFM (2, B, K, F_b), image (3, B, h, w); output (1, B, K, F_h).
template <typename T>
class Model {
 public:
  Model(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  nn::Tensor<T> forward(const nn::Tensor<T>* bfm, const nn::Tensor<T>* image, nn::Mode mode);
  /// Encoder outputs alone (empty tensors for unused branches).
  std::pair<nn::Tensor<T>, nn::Tensor<T>> encode(const nn::Tensor<T>* bfm,
                                                 const nn::Tensor<T>* image, nn::Mode mode);
  /// Backpropagates dLoss/dOutput; parameter gradients accumulate. Returns the
  /// input gradients (empty tensors for unused branches).
  std::pair<nn::Tensor<T>, nn::Tensor<T>> backward(const nn::Tensor<T>& grad_out);

  std::vector<nn::Parameter<T>*> parameters();
  std::int64_t parameter_count();

  ModelParams params() const;
  void load_params(const ModelParams& params);

 private:
  struct Branch {
    std::string name;
    nn::Sequential<T> net;
  };
  void build_branch(Branch& branch, const std::vector<LayerSpec>& layers, std::mt19937_64& rng);

  ModelSpec spec_;
  std::uint64_t seed_;
  Branch bfm_{"bfm_encoder", {}};
  Branch image_{"image_encoder", {}};
  Branch decoder_{"decoder", {}};
  int bfm_channels_out_ = 0;
};

/// Packs records into the channel-major batch layout.
template <typename T>
nn::Tensor<T> pack_bfm(std::span<const PreprocessedRecord* const> batch);
template <typename T>
nn::Tensor<T> pack_images(std::span<const PreprocessedRecord* const> batch);
template <typename T>
nn::Tensor<T> pack_targets(std::span<const PreprocessedRecord* const> batch);

/// Checks one record against the model dimensions; names the offending axis.
void check_record(const ModelSpec& spec, const PreprocessedRecord& record);

/// Batched forward on records; returns one K x F_h x 1 array per record.
std::vector<Array3<float>> forward(Model<float>& model,
                                   std::span<const PreprocessedRecord* const> batch,
                                   nn::Mode mode);
Array3<float> forward(Model<float>& model, const PreprocessedRecord& record, nn::Mode mode);

}  // namespace recomp
