#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recomp/array3.hpp"
#include "recomp/bfm_core.hpp"
#include "recomp/sim_scene.hpp"

namespace recomp {

/// Model-ready sample. bfm_features is K x F_b x 2 (modulus, argument),
/// image is h x w x 3 in [0, 1], target is K x F_h x 1.
struct PreprocessedRecord {
  Array3<float> bfm_features;
  Array3<float> image;
  Array3<float> target;
};

/// Per-coordinate (k, element) amplitude range over the training split.
struct NormStats {
  int K = 0;
  int F = 0;
  std::vector<float> min;
  std::vector<float> max;

  bool degenerate(std::size_t i) const { return !(max[i] > min[i]); }
  std::size_t degenerate_count() const;
  bool operator==(const NormStats&) const = default;
};

Array3<float> flatten_bfm(const BfmSample& bfm);
Array3<float> flatten_csi_amplitude(const CsiSample& csi);

NormStats fit_norm_stats(std::span<const Array3<float>> targets);
/// Same reduction over the subset `indices` of `targets`.
NormStats fit_norm_stats(std::span<const Array3<float>> targets,
                         std::span<const std::int64_t> indices);
Array3<float> normalize(const Array3<float>& target, const NormStats& stats);

Array3<float> downsample_image(const Image& image, int h, int w);

}  // namespace recomp
