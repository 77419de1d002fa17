#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "recomp/error.hpp"
#include "recomp/nn/layers.hpp"

namespace recomp::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMapMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMapMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using MapCol = Eigen::Map<ColMat<T>>;
template <typename T>
using ConstMapCol = Eigen::Map<const ColMat<T>>;
template <typename T>
using StridedMapCol = Eigen::Map<ColMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MapArr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstMapArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

void require_cache(bool cached, const char* layer) {
  if (!cached)
    throw std::logic_error(std::string(layer) + ": backward() without a train-mode forward()");
}

void require_channels(const Shape& in, int expected, const char* layer) {
  if (in.c != expected)
    throw ShapeError(std::string(layer) + ": channel axis is " + std::to_string(in.c) +
                     ", expected " + std::to_string(expected));
}

}  // namespace

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat: inputs " + sa.str() + " and " + sb.str() +
                     " differ outside the channel axis");
  Tensor<T> out({sa.c + sb.c, sa.n, sa.h, sa.w});
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& x, int channels_a, Tensor<T>& a, Tensor<T>& b) {
  const Shape s = x.shape();
  a = Tensor<T>({channels_a, s.n, s.h, s.w});
  b = Tensor<T>({s.c - channels_a, s.n, s.h, s.w});
  std::copy(x.values().begin(), x.values().begin() + static_cast<std::ptrdiff_t>(a.size()),
            a.values().begin());
  std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(a.size()), x.values().end(),
            b.values().begin());
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w)
    : in_(in_channels),
      out_(out_channels),
      kh_(kernel_h),
      kw_(kernel_w),
      weight_("weight", static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w),
      bias_("bias", static_cast<std::size_t>(out_channels)) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0)
    throw ConfigError("conv2d: same padding needs odd kernel sizes");
}

template <typename T>
void Conv2d<T>::init_uniform(std::mt19937_64& rng, double gain) {
  const double limit = std::sqrt(gain / (static_cast<double>(in_) * kh_ * kw_));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& w : weight_.value) w = static_cast<T>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), T{0});
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  require_channels(in, in_, "conv2d");
  return {out_, in.n, in.h, in.w};
}

template <typename T>
int Conv2d<T>::chunk(const Shape& s) const {
  constexpr std::size_t kColumns = 4096;
  return static_cast<int>(std::clamp<std::size_t>(kColumns / std::max<std::size_t>(s.plane(), 1), 1,
                                                  static_cast<std::size_t>(s.n)));
}

template <typename T>
void Conv2d<T>::im2col(const Tensor<T>& x, int n0, int n1) {
  const Shape s = x.shape();
  const std::size_t pixels = static_cast<std::size_t>(n1 - n0) * s.plane();
  // Every entry is written below, so only the padding is zeroed.
  cols_.resize(static_cast<std::size_t>(in_) * kh_ * kw_ * pixels);
  const int ph = kh_ / 2;
  const int pw = kw_ / 2;
  for (int ci = 0; ci < in_; ++ci) {
    for (int dy = 0; dy < kh_; ++dy) {
      for (int dx = 0; dx < kw_; ++dx) {
        T* row = cols_.data() + ((static_cast<std::size_t>(ci) * kh_ + dy) * kw_ + dx) * pixels;
        const int x_lo = std::min(s.w, std::max(0, pw - dx));
        const int x_hi = std::max(x_lo, std::min(s.w, s.w + pw - dx));
        for (int n = n0; n < n1; ++n) {
          const T* src_plane = x.plane(ci, n);
          T* dst_plane = row + static_cast<std::size_t>(n - n0) * s.plane();
          for (int y = 0; y < s.h; ++y) {
            const int yy = y + dy - ph;
            T* dst = dst_plane + static_cast<std::size_t>(y) * s.w;
            if (yy < 0 || yy >= s.h) {
              std::fill(dst, dst + s.w, T{0});
              continue;
            }
            const T* src = src_plane + static_cast<std::size_t>(yy) * s.w + (dx - pw);
            std::fill(dst, dst + x_lo, T{0});
            std::copy(src + x_lo, src + x_hi, dst + x_lo);
            std::fill(dst + x_hi, dst + s.w, T{0});
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(Tensor<T>& dx, int n0, int n1) const {
  const Shape s = dx.shape();
  const std::size_t pixels = static_cast<std::size_t>(n1 - n0) * s.plane();
  const int ph = kh_ / 2;
  const int pw = kw_ / 2;
  for (int ci = 0; ci < in_; ++ci) {
    for (int dyk = 0; dyk < kh_; ++dyk) {
      for (int dxk = 0; dxk < kw_; ++dxk) {
        const T* row = cols_.data() + ((static_cast<std::size_t>(ci) * kh_ + dyk) * kw_ + dxk) * pixels;
        const int x_lo = std::max(0, pw - dxk);
        const int x_hi = std::min(s.w, s.w + pw - dxk);
        if (x_lo >= x_hi) continue;
        for (int n = n0; n < n1; ++n) {
          T* dst_plane = dx.plane(ci, n);
          const T* src_plane = row + static_cast<std::size_t>(n - n0) * s.plane();
          for (int y = 0; y < s.h; ++y) {
            const int yy = y + dyk - ph;
            if (yy < 0 || yy >= s.h) continue;
            T* dst = dst_plane + static_cast<std::size_t>(yy) * s.w + (dxk - pw);
            const T* src = src_plane + static_cast<std::size_t>(y) * s.w;
            for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] += src[xx];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode) {
  const Shape s = x.shape();
  const Shape out_shape = output_shape(s);
  const auto total = static_cast<Eigen::Index>(static_cast<std::size_t>(s.n) * s.plane());
  const Eigen::Index depth = static_cast<Eigen::Index>(in_) * kh_ * kw_;
  const auto plane = static_cast<Eigen::Index>(s.plane());

  Tensor<T> y(out_shape);
  ConstMapMat<T> w(weight_.value.data(), out_, depth);
  const int step = chunk(s);
  for (int n0 = 0; n0 < s.n; n0 += step) {
    const int n1 = std::min(s.n, n0 + step);
    im2col(x, n0, n1);
    const Eigen::Index cols_n = (n1 - n0) * plane;
    // Computed transposed so the long pixel axis is the GEMM's row axis, which
    // the kernel blocks far better than 16-32 output channels.
    ConstMapCol<T> cols_t(cols_.data(), cols_n, depth);
    StridedMapCol<T> y_t(y.data() + n0 * plane, cols_n, out_, Eigen::OuterStride<>(total));
    y_t.noalias() = cols_t * w.transpose();
  }
  MapMat<T> yall(y.data(), out_, total);
  for (int co = 0; co < out_; ++co) yall.row(co).array() += bias_.value[co];

  cached_ = mode == Mode::kTrain;
  x_ = cached_ ? x : Tensor<T>();
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(cached_, "conv2d");
  const Shape s = x_.shape();
  const auto total = static_cast<Eigen::Index>(static_cast<std::size_t>(s.n) * s.plane());
  const Eigen::Index depth = static_cast<Eigen::Index>(in_) * kh_ * kw_;
  const auto plane = static_cast<Eigen::Index>(s.plane());

  ConstMapMat<T> dy_all(grad_out.data(), out_, total);
  for (int co = 0; co < out_; ++co) bias_.grad[co] += dy_all.row(co).sum();

  ConstMapMat<T> w(weight_.value.data(), out_, depth);
  MapMat<T> dw(weight_.grad.data(), out_, depth);
  Tensor<T> dx(s);
  const int step = chunk(s);
  for (int n0 = 0; n0 < s.n; n0 += step) {
    const int n1 = std::min(s.n, n0 + step);
    const Eigen::Index cols_n = (n1 - n0) * plane;
    ConstStridedMapMat<T> dy(grad_out.data() + n0 * plane, out_, cols_n, Eigen::OuterStride<>(total));
    im2col(x_, n0, n1);
    MapMat<T> cols(cols_.data(), depth, cols_n);
    dw.noalias() += dy * cols.transpose();
    // The columns are dead once dw has them; reuse the buffer for the input-side
    // gradient, again transposed to put pixels on the row axis.
    MapCol<T> dcols_t(cols_.data(), cols_n, depth);
    dcols_t.noalias() = dy.transpose() * w;
    col2im(dx, n0, n1);
  }
  cached_ = false;
  x_ = Tensor<T>();
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, bool relu, double momentum, double eps)
    : channels_(channels),
      relu_(relu),
      momentum_(momentum),
      eps_(eps),
      gamma_("gamma", static_cast<std::size_t>(channels)),
      beta_("beta", static_cast<std::size_t>(channels)),
      running_mean_{"running_mean", std::vector<T>(static_cast<std::size_t>(channels), T{0})},
      running_var_{"running_var", std::vector<T>(static_cast<std::size_t>(channels), T{1})} {
  std::fill(gamma_.value.begin(), gamma_.value.end(), T{1});
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  const Shape s = x.shape();
  require_channels(s, channels_, "batchnorm");
  const std::size_t count = static_cast<std::size_t>(s.n) * s.plane();
  Tensor<T> y(s);

  if (mode == Mode::kEval) {
    for (int c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) + eps_);
      const T scale = static_cast<T>(gamma_.value[c] * inv);
      const T shift = static_cast<T>(beta_.value[c] - running_mean_.value[c] * gamma_.value[c] * inv);
      const T* src = x.plane(c, 0);
      T* dst = y.plane(c, 0);
      for (std::size_t i = 0; i < count; ++i) dst[i] = src[i] * scale + shift;
      if (relu_)
        for (std::size_t i = 0; i < count; ++i) dst[i] = dst[i] > T{0} ? dst[i] : T{0};
    }
    cached_ = false;
    return y;
  }

  if (count < 2) throw ShapeError("batchnorm: train mode needs more than one value per channel");
  x_hat_ = Tensor<T>(s);
  inv_std_.assign(static_cast<std::size_t>(channels_), T{0});
  for (int c = 0; c < channels_; ++c) {
    ConstMapArr<T> src(x.plane(c, 0), static_cast<Eigen::Index>(count));
    const double mean = static_cast<double>(src.sum()) / count;
    const double sq = static_cast<double>((src - static_cast<T>(mean)).square().sum());
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = static_cast<T>(inv);
    MapArr<T> xh(x_hat_.plane(c, 0), static_cast<Eigen::Index>(count));
    MapArr<T> dst(y.plane(c, 0), static_cast<Eigen::Index>(count));
    xh = (src - static_cast<T>(mean)) * static_cast<T>(inv);
    if (relu_)
      dst = (gamma_.value[c] * xh + beta_.value[c]).max(T{0});
    else
      dst = gamma_.value[c] * xh + beta_.value[c];
    const double unbiased = sq / (count - 1);
    running_mean_.value[c] =
        static_cast<T>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
    running_var_.value[c] =
        static_cast<T>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
  }
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(cached_, "batchnorm");
  const Shape s = grad_out.shape();
  const std::size_t count = static_cast<std::size_t>(s.n) * s.plane();
  Tensor<T> dx(s);
  for (int c = 0; c < channels_; ++c) {
    ConstMapArr<T> dy(grad_out.plane(c, 0), static_cast<Eigen::Index>(count));
    ConstMapArr<T> xh(x_hat_.plane(c, 0), static_cast<Eigen::Index>(count));
    MapArr<T> out(dx.plane(c, 0), static_cast<Eigen::Index>(count));
    const T k = static_cast<T>(gamma_.value[c] * static_cast<double>(inv_std_[c]) / count);
    const auto apply = [&](const auto& g) {
      const T sum_g = g.sum();
      const T sum_g_xh = (g * xh).sum();
      gamma_.grad[c] += sum_g_xh;
      beta_.grad[c] += sum_g;
      out = k * (static_cast<T>(count) * g - sum_g - xh * sum_g_xh);
    };
    if (relu_)
      apply(((gamma_.value[c] * xh + beta_.value[c]) > T{0}).select(dy, T{0}));
    else
      apply(dy);
  }
  cached_ = false;
  x_hat_ = Tensor<T>();
  return dx;
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y(x.shape());
  const T* src = x.data();
  T* dst = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    active_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) active_[i] = src[i] > T{0};
  }
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  require_cache(cached_, "relu");
  Tensor<T> dx(grad_out.shape());
  const T* g = grad_out.data();
  T* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = active_[i] ? g[i] : T{0};
  cached_ = false;
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& in) const {
  const Shape out{in.c, in.n, in.h / ph_, in.w / pw_};
  if (out.h < 1 || out.w < 1)
    throw ShapeError("maxpool2d: input " + in.str() + " smaller than the pooling window");
  return out;
}

namespace {

/// Max over each window of one plane; the first maximum in row-major order wins.
template <typename T, int PH = 0, int PW = 0>
void pool_plane(const T* src, int in_w, int out_h, int out_w, std::uint32_t base, T* out,
                std::uint32_t* arg, int ph = PH, int pw = PW) {
  if constexpr (PH > 0) {
    ph = PH;
    pw = PW;
  }
  for (int oy = 0; oy < out_h; ++oy) {
    const std::size_t top = static_cast<std::size_t>(oy) * ph * in_w;
    for (int ox = 0; ox < out_w; ++ox) {
      std::size_t best = top + static_cast<std::size_t>(ox) * pw;
      T v = src[best];
      for (int dy = 0; dy < ph; ++dy) {
        const std::size_t r = top + static_cast<std::size_t>(dy) * in_w + static_cast<std::size_t>(ox) * pw;
        for (int dx = 0; dx < pw; ++dx) {
          const bool more = src[r + dx] > v;
          v = more ? src[r + dx] : v;
          best = more ? r + dx : best;
        }
      }
      *out++ = v;
      *arg++ = base + static_cast<std::uint32_t>(best);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode mode) {
  const Shape s = x.shape();
  const Shape o = output_shape(s);
  Tensor<T> y(o);
  const bool train = mode == Mode::kTrain;
  argmax_.resize(o.numel());
  T* out = y.data();
  std::uint32_t* arg = argmax_.data();
  for (int c = 0; c < s.c; ++c)
    for (int n = 0; n < s.n; ++n) {
      const auto base = static_cast<std::uint32_t>(x.offset(c, n, 0, 0));
      if (ph_ == 2 && pw_ == 2)
        pool_plane<T, 2, 2>(x.plane(c, n), s.w, o.h, o.w, base, out, arg);
      else if (ph_ == 2 && pw_ == 1)
        pool_plane<T, 2, 1>(x.plane(c, n), s.w, o.h, o.w, base, out, arg);
      else
        pool_plane<T>(x.plane(c, n), s.w, o.h, o.w, base, out, arg, ph_, pw_);
      out += o.plane();
      arg += o.plane();
    }
  in_shape_ = s;
  cached_ = train;
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(cached_, "maxpool2d");
  Tensor<T> dx(in_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) dx.values()[argmax_[i]] += grad_out.values()[i];
  cached_ = false;
  return dx;
}

// ------------------------------------------------------------ Upsample2d

template <typename T>
Tensor<T> Upsample2d<T>::forward(const Tensor<T>& x, Mode) {
  const Shape s = x.shape();
  const Shape o = output_shape(s);
  Tensor<T> y(o);
  for (int c = 0; c < s.c; ++c)
    for (int n = 0; n < s.n; ++n) {
      const T* src = x.plane(c, n);
      T* dst = y.plane(c, n);
      for (int oy = 0; oy < o.h; ++oy)
        for (int ox = 0; ox < o.w; ++ox)
          dst[static_cast<std::size_t>(oy) * o.w + ox] =
              src[static_cast<std::size_t>(oy / sh_) * s.w + ox / sw_];
    }
  in_shape_ = s;
  return y;
}

template <typename T>
Tensor<T> Upsample2d<T>::backward(const Tensor<T>& grad_out) {
  const Shape s = in_shape_;
  const Shape o = grad_out.shape();
  Tensor<T> dx(s);
  for (int c = 0; c < s.c; ++c)
    for (int n = 0; n < s.n; ++n) {
      const T* src = grad_out.plane(c, n);
      T* dst = dx.plane(c, n);
      for (int oy = 0; oy < o.h; ++oy)
        for (int ox = 0; ox < o.w; ++ox)
          dst[static_cast<std::size_t>(oy / sh_) * s.w + ox / sw_] +=
              src[static_cast<std::size_t>(oy) * o.w + ox];
    }
  return dx;
}

// -------------------------------------------------------------- Resize2d

template <typename T>
std::vector<typename Resize2d<T>::Lerp> Resize2d<T>::axis(int in, int out) {
  std::vector<Lerp> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    taps[i] = {lo, std::min(lo + 1, in - 1), static_cast<T>(src - lo)};
  }
  return taps;
}

template <typename T>
Tensor<T> Resize2d<T>::forward(const Tensor<T>& x, Mode) {
  const Shape s = x.shape();
  const Shape o = output_shape(s);
  const auto ry = axis(s.h, o.h);
  const auto rx = axis(s.w, o.w);
  Tensor<T> y(o);
  for (int c = 0; c < s.c; ++c)
    for (int n = 0; n < s.n; ++n) {
      const T* src = x.plane(c, n);
      T* dst = y.plane(c, n);
      for (int oy = 0; oy < o.h; ++oy) {
        const Lerp& a = ry[oy];
        for (int ox = 0; ox < o.w; ++ox) {
          const Lerp& b = rx[ox];
          const T top = src[a.lo * s.w + b.lo] * (1 - b.frac) + src[a.lo * s.w + b.hi] * b.frac;
          const T bot = src[a.hi * s.w + b.lo] * (1 - b.frac) + src[a.hi * s.w + b.hi] * b.frac;
          dst[static_cast<std::size_t>(oy) * o.w + ox] = top * (1 - a.frac) + bot * a.frac;
        }
      }
    }
  in_shape_ = s;
  return y;
}

template <typename T>
Tensor<T> Resize2d<T>::backward(const Tensor<T>& grad_out) {
  const Shape s = in_shape_;
  const Shape o = grad_out.shape();
  const auto ry = axis(s.h, o.h);
  const auto rx = axis(s.w, o.w);
  Tensor<T> dx(s);
  for (int c = 0; c < s.c; ++c)
    for (int n = 0; n < s.n; ++n) {
      const T* g = grad_out.plane(c, n);
      T* dst = dx.plane(c, n);
      for (int oy = 0; oy < o.h; ++oy) {
        const Lerp& a = ry[oy];
        for (int ox = 0; ox < o.w; ++ox) {
          const Lerp& b = rx[ox];
          const T v = g[static_cast<std::size_t>(oy) * o.w + ox];
          dst[a.lo * s.w + b.lo] += v * (1 - a.frac) * (1 - b.frac);
          dst[a.lo * s.w + b.hi] += v * (1 - a.frac) * b.frac;
          dst[a.hi * s.w + b.lo] += v * a.frac * (1 - b.frac);
          dst[a.hi * s.w + b.hi] += v * a.frac * b.frac;
        }
      }
    }
  return dx;
}

// --------------------------------------------------------- ElementLinear

template <typename T>
ElementLinear<T>::ElementLinear(int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_("weight", static_cast<std::size_t>(in_features) * out_features),
      bias_("bias", static_cast<std::size_t>(out_features)) {}

template <typename T>
void ElementLinear<T>::init_uniform(std::mt19937_64& rng, double gain) {
  const double limit = std::sqrt(gain / in_);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& w : weight_.value) w = static_cast<T>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), T{0});
}

template <typename T>
Tensor<T> ElementLinear<T>::forward(const Tensor<T>& x, Mode mode) {
  const Shape s = x.shape();
  if (s.w != in_)
    throw ShapeError("linear: element axis is " + std::to_string(s.w) + ", expected " +
                     std::to_string(in_));
  const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(s.c) * s.n * s.h);
  Tensor<T> y(output_shape(s));
  ConstMapMat<T> xm(x.data(), rows, in_);
  ConstMapMat<T> w(weight_.value.data(), out_, in_);
  MapMat<T> ym(y.data(), rows, out_);
  ym.noalias() = xm * w.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_);
  ym.rowwise() += b;
  cached_ = mode == Mode::kTrain;
  if (cached_) x_ = x;
  return y;
}

template <typename T>
Tensor<T> ElementLinear<T>::backward(const Tensor<T>& grad_out) {
  require_cache(cached_, "linear");
  const Shape s = x_.shape();
  const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(s.c) * s.n * s.h);
  ConstMapMat<T> dy(grad_out.data(), rows, out_);
  ConstMapMat<T> xm(x_.data(), rows, in_);
  MapMat<T> dw(weight_.grad.data(), out_, in_);
  dw.noalias() += dy.transpose() * xm;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), out_);
  db += dy.colwise().sum();
  ConstMapMat<T> w(weight_.value.data(), out_, in_);
  Tensor<T> dx(s);
  MapMat<T> dxm(dx.data(), rows, in_);
  dxm.noalias() = dy * w;
  cached_ = false;
  x_ = Tensor<T>();
  return dx;
}

// ------------------------------------------------------------ Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
Shape Sequential<T>::output_shape(Shape in) const {
  for (const auto& layer : layers_) in = layer->output_shape(in);
  return in;
}

#define RECOMP_INSTANTIATE(T)                                                          \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);              \
  template void split_channels(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);         \
  template class Conv2d<T>;                                                            \
  template class BatchNorm2d<T>;                                                       \
  template class ReLU<T>;                                                              \
  template class MaxPool2d<T>;                                                         \
  template class Upsample2d<T>;                                                        \
  template class Resize2d<T>;                                                          \
  template class ElementLinear<T>;                                                     \
  template class Sequential<T>;

RECOMP_INSTANTIATE(float)
RECOMP_INSTANTIATE(double)

#undef RECOMP_INSTANTIATE

}  // namespace recomp::nn
