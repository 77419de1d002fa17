#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace recomp::nn {

/// Activation shape in channel-major layout: [channel][batch][row][col].
/// Keeping channels outermost lets a convolution write its GEMM result in
/// place and makes channel concatenation a plain append.
struct Shape {
  int c = 0;
  int n = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const { return static_cast<std::size_t>(c) * n * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(c=" + std::to_string(c) + ", n=" + std::to_string(n) + ", h=" + std::to_string(h) +
           ", w=" + std::to_string(w) + ")";
  }
};

/// Storage is aligned so that vectorized reductions split their work the same
/// way regardless of where the allocator put the buffer. Without this, sums
/// (and so training runs) change with heap layout.
template <typename T>
class Tensor {
 public:
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.numel(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  Storage& values() { return data_; }
  const Storage& values() const { return data_; }

  std::size_t offset(int c, int n, int h, int w) const {
    return ((static_cast<std::size_t>(c) * shape_.n + n) * shape_.h + h) * shape_.w + w;
  }
  T& at(int c, int n, int h, int w) { return data_[offset(c, n, h, w)]; }
  const T& at(int c, int n, int h, int w) const { return data_[offset(c, n, h, w)]; }

  /// Start of the (c, n) image plane.
  T* plane(int c, int n) { return data_.data() + offset(c, n, 0, 0); }
  const T* plane(int c, int n) const { return data_.data() + offset(c, n, 0, 0); }

 private:
  Shape shape_;
  Storage data_;
};

/// Stacks `a` then `b` along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Inverse of concat_channels for gradients: first `channels_a` channels go to `a`.
template <typename T>
void split_channels(const Tensor<T>& x, int channels_a, Tensor<T>& a, Tensor<T>& b);

}  // namespace recomp::nn
