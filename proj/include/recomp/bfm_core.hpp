#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "recomp/sim_scene.hpp"

namespace recomp {

using CMatrix = Eigen::MatrixXcd;
using CsiSlice = Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// H = U diag(S) V^H for one subcarrier. U is N x N, S holds min(M, N)
/// nonincreasing singular values, V is M x min(M, N).
struct SvdFactors {
  CMatrix U;
  Eigen::VectorXd S;
  CMatrix V;
};

/// Beamforming feedback for one time instant, row-major [k][m][s].
struct BfmSample {
  std::int64_t t = 0;
  int K = 0;
  int M = 0;
  int S = 0;
  std::vector<cd> bfm;

  BfmSample() = default;
  BfmSample(std::int64_t t_, int k, int m, int s)
      : t(t_), K(k), M(m), S(s), bfm(static_cast<std::size_t>(k) * m * s) {}

  cd& at(int k, int m, int s) { return bfm[(static_cast<std::size_t>(k) * M + m) * S + s]; }
  cd at(int k, int m, int s) const { return bfm[(static_cast<std::size_t>(k) * M + m) * S + s]; }
  CMatrix slice(int k) const;
};

/// View of subcarrier k of a CSI sample as an N x M matrix.
CsiSlice csi_slice(const CsiSample& csi, int k);

SvdFactors svd_slice(const CMatrix& h);
std::vector<SvdFactors> svd_per_subcarrier(const CsiSample& csi);

/// Rotates each column by a unit phase so that its largest-magnitude entry
/// (lowest row on ties) is real and non-negative. Zero columns pass through.
CMatrix canonicalize(CMatrix v);

BfmSample emulate_bfm(const CsiSample& csi);

}  // namespace recomp
