#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "recomp/nn/tensor.hpp"

namespace recomp::nn {

enum class Mode { kTrain, kEval };

/// Trainable parameter with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;

  explicit Parameter(std::string n = {}, std::size_t size = 0)
      : name(std::move(n)), value(size), grad(size) {}
};

/// Non-trainable state that is still part of a checkpoint (batch-norm running stats).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T> value;
};

/// Layers cache what backward() needs during a kTrain forward; calling
/// backward() after a kEval forward is an error.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>*> buffers() { return {}; }
};

/// Same-padded convolution with bias; odd kernel sizes only.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  /// Uniform in +-sqrt(gain / fan_in); bias zero.
  void init_uniform(std::mt19937_64& rng, double gain);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  /// Samples per GEMM: enough columns to keep the kernel busy while the
  /// column buffer stays cache-sized.
  int chunk(const Shape& s) const;
  /// Unfolds samples [n0, n1) into cols_ as [in * kh * kw][(n1 - n0) * h * w].
  void im2col(const Tensor<T>& x, int n0, int n1);
  /// Adds the columns in cols_ back onto samples [n0, n1) of dx.
  void col2im(Tensor<T>& dx, int n0, int n1) const;

  int in_, out_, kh_, kw_;
  Parameter<T> weight_;  // [out][in][kh][kw]
  Parameter<T> bias_;
  std::vector<T> cols_;
  Tensor<T> x_;  // input kept for the backward pass
  bool cached_ = false;
};

/// Per-channel normalization over (batch, row, col). With `relu` set the
/// activation is applied in the same pass, saving a trip over the tensor.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, bool relu = false, double momentum = 0.1, double eps = 1e-5);

  std::string kind() const override { return relu_ ? "batchnorm+relu" : "batchnorm"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>*> buffers() override { return {&running_mean_, &running_var_}; }

 private:
  int channels_;
  bool relu_;
  double momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Buffer<T> running_mean_, running_var_;
  Tensor<T> x_hat_;
  std::vector<T> inv_std_;
  bool cached_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::vector<std::uint8_t> active_;
  bool cached_ = false;
};

/// Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int pool_h, int pool_w) : ph_(pool_h), pw_(pool_w) {}

  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int ph_, pw_;
  Shape in_shape_{};
  std::vector<std::uint32_t> argmax_;
  bool cached_ = false;
};

/// Nearest-neighbour upsampling by integer factors.
template <typename T>
class Upsample2d final : public Layer<T> {
 public:
  Upsample2d(int scale_h, int scale_w) : sh_(scale_h), sw_(scale_w) {}

  std::string kind() const override { return "upsample2d"; }
  Shape output_shape(const Shape& in) const override {
    return {in.c, in.n, in.h * sh_, in.w * sw_};
  }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int sh_, sw_;
  Shape in_shape_{};
};

/// Bilinear resize to a fixed (rows, cols) with half-pixel sample centres.
template <typename T>
class Resize2d final : public Layer<T> {
 public:
  Resize2d(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  std::string kind() const override { return "resize"; }
  Shape output_shape(const Shape& in) const override { return {in.c, in.n, out_h_, out_w_}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  struct Lerp {
    int lo, hi;
    T frac;
  };
  static std::vector<Lerp> axis(int in, int out);

  int out_h_, out_w_;
  Shape in_shape_{};
};

/// Dense map along the column (element) axis, shared over channels, batch and rows.
template <typename T>
class ElementLinear final : public Layer<T> {
 public:
  ElementLinear(int in_features, int out_features);

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override { return {in.c, in.n, in.h, out_}; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  void init_uniform(std::mt19937_64& rng, double gain);

 private:
  int in_, out_;
  Parameter<T> weight_;  // [out][in]
  Parameter<T> bias_;
  Tensor<T> x_;
  bool cached_ = false;
};

template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  Shape output_shape(Shape in) const;

  std::vector<std::unique_ptr<Layer<T>>>& layers() { return layers_; }
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace recomp::nn
