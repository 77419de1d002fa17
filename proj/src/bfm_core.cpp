#include "recomp/bfm_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "recomp/error.hpp"

namespace recomp {

CMatrix BfmSample::slice(int k) const {
  CMatrix v(M, S);
  for (int m = 0; m < M; ++m)
    for (int s = 0; s < S; ++s) v(m, s) = at(k, m, s);
  return v;
}

CsiSlice csi_slice(const CsiSample& csi, int k) {
  return CsiSlice(csi.csi.data() + static_cast<std::size_t>(k) * csi.N * csi.M, csi.N, csi.M);
}

SvdFactors svd_slice(const CMatrix& h) {
  if (!h.allFinite()) throw ShapeError("svd: non-finite CSI entry");
  // JacobiSVD returns singular values sorted in decreasing order.
  Eigen::JacobiSVD<CMatrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

std::vector<SvdFactors> svd_per_subcarrier(const CsiSample& csi) {
  if (csi.csi.size() != static_cast<std::size_t>(csi.K) * csi.N * csi.M)
    throw ShapeError("svd: CSI buffer does not match K x N x M");
  std::vector<SvdFactors> out;
  out.reserve(static_cast<std::size_t>(csi.K));
  for (int k = 0; k < csi.K; ++k) {
    try {
      out.push_back(svd_slice(csi_slice(csi, k)));
    } catch (const ShapeError&) {
      throw ShapeError("svd: non-finite CSI entry at subcarrier " + std::to_string(k));
    }
  }
  return out;
}

CMatrix canonicalize(CMatrix v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const double mag = std::abs(v(r, c));
      if (mag > best_mag) {
        best_mag = mag;
        best = r;
      }
    }
    if (!(best_mag > 0.0)) continue;
    const cd rot = std::conj(v(best, c)) / best_mag;
    v.col(c) *= rot;
    v(best, c) = cd(std::abs(v(best, c)), 0.0);
  }
  return v;
}

BfmSample emulate_bfm(const CsiSample& csi) {
  const auto factors = svd_per_subcarrier(csi);
  const int s_cols = std::min(csi.M, csi.N);
  BfmSample out(csi.t, csi.K, csi.M, s_cols);
  for (int k = 0; k < csi.K; ++k) {
    const CMatrix v = canonicalize(factors[k].V);
    for (int m = 0; m < csi.M; ++m)
      for (int s = 0; s < s_cols; ++s) out.at(k, m, s) = v(m, s);
  }
  return out;
}

}  // namespace recomp
