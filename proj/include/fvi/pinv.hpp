#pragma once

#include <Eigen/SVD>

#include "fvi/matrix.hpp"

namespace fvi {

/**
 * Moore-Penrose pseudoinverse computed from a singular value decomposition.
 *
 * Singular values below 1e-12 * sigma_max are treated as zero, so
 * rank-deficient inputs degrade gracefully to the minimum-norm least-squares
 * inverse instead of blowing up.
 */
inline Mat mat_pinv(const Mat &m) {
  require_finite(m, "mat_pinv");
  if (m.rows() == 0 || m.cols() == 0) return Mat::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto &sigma = svd.singularValues();
  const double cutoff = 1e-12 * sigma(0);
  Vec inv = Vec::Zero(sigma.size());
  for (index_t i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cutoff) inv(i) = 1.0 / sigma(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace fvi
