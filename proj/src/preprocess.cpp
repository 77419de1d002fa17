#include "recomp/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "recomp/error.hpp"

namespace recomp {
namespace {

// Area-averaging weights: row i of the result lists (source index, weight)
// pairs covering output cell i; weights of a cell sum to one.
struct Tap {
  int src;
  double weight;
};

std::vector<std::vector<Tap>> area_taps(int src, int dst) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    for (int s = static_cast<int>(std::floor(lo)); s < src && s < hi; ++s) {
      const double overlap = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
      if (overlap > 0.0) taps[i].push_back({s, overlap / scale});
    }
  }
  return taps;
}

}  // namespace

std::size_t NormStats::degenerate_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < min.size(); ++i) n += degenerate(i) ? 1 : 0;
  return n;
}

Array3<float> flatten_bfm(const BfmSample& bfm) {
  const int features = bfm.M * bfm.S;
  Array3<float> out(bfm.K, features, 2);
  for (int k = 0; k < bfm.K; ++k) {
    for (int m = 0; m < bfm.M; ++m) {
      for (int s = 0; s < bfm.S; ++s) {
        const cd v = bfm.at(k, m, s);
        const int e = m * bfm.S + s;
        out(k, e, 0) = static_cast<float>(std::abs(v));
        // std::arg(0) is already 0. A negative real with a -0 imaginary part
        // gives -pi; fold it onto +pi so the range is (-pi, pi].
        double a = std::arg(v);
        if (a <= -std::numbers::pi) a = std::numbers::pi;
        out(k, e, 1) = static_cast<float>(a);
      }
    }
  }
  return out;
}

Array3<float> flatten_csi_amplitude(const CsiSample& csi) {
  Array3<float> out(csi.K, csi.N * csi.M, 1);
  for (int k = 0; k < csi.K; ++k)
    for (int n = 0; n < csi.N; ++n)
      for (int m = 0; m < csi.M; ++m)
        out(k, n * csi.M + m, 0) = static_cast<float>(std::abs(csi.at(k, n, m)));
  return out;
}

NormStats fit_norm_stats(std::span<const Array3<float>> targets) {
  std::vector<std::int64_t> all(targets.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
  return fit_norm_stats(targets, all);
}

NormStats fit_norm_stats(std::span<const Array3<float>> targets,
                         std::span<const std::int64_t> indices) {
  if (indices.empty()) throw ConfigError("fit_norm_stats: empty training split");
  const Array3<float>& first = targets[static_cast<std::size_t>(indices.front())];
  NormStats stats;
  stats.K = first.shape[0];
  stats.F = first.shape[1];
  stats.min = first.data;
  stats.max = first.data;
  for (std::int64_t idx : indices) {
    const Array3<float>& t = targets[static_cast<std::size_t>(idx)];
    if (t.shape != first.shape)
      throw ShapeError("fit_norm_stats: target " + std::to_string(idx) + " has shape " +
                       t.shape_str() + ", expected " + first.shape_str());
    for (std::size_t i = 0; i < t.size(); ++i) {
      stats.min[i] = std::min(stats.min[i], t.data[i]);
      stats.max[i] = std::max(stats.max[i], t.data[i]);
    }
  }
  return stats;
}

Array3<float> normalize(const Array3<float>& target, const NormStats& stats) {
  if (target.size() != stats.min.size())
    throw ShapeError("normalize: target " + target.shape_str() + " does not match stats (" +
                     std::to_string(stats.K) + ", " + std::to_string(stats.F) + ", 1)");
  Array3<float> out = target;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (stats.degenerate(i)) {
      out.data[i] = 0.0f;
      continue;
    }
    const double v = (static_cast<double>(target.data[i]) - stats.min[i]) /
                     (static_cast<double>(stats.max[i]) - stats.min[i]);
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Array3<float> downsample_image(const Image& image, int h, int w) {
  if (h < 1 || w < 1) throw ConfigError("downsample_image: target size must be positive");
  if (h > image.height || w > image.width)
    throw ConfigError("downsample_image: cannot upsample " + std::to_string(image.height) + "x" +
                      std::to_string(image.width) + " to " + std::to_string(h) + "x" +
                      std::to_string(w));
  const auto rows = area_taps(image.height, h);
  const auto cols = area_taps(image.width, w);
  Array3<float> out(h, w, 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (const Tap& tr : rows[r])
        for (const Tap& tc : cols[c])
          for (int ch = 0; ch < 3; ++ch)
            acc[ch] += tr.weight * tc.weight * image.at(tr.src, tc.src, ch);
      for (int ch = 0; ch < 3; ++ch) out(r, c, ch) = static_cast<float>(acc[ch] / 255.0);
    }
  }
  return out;
}

}  // namespace recomp
