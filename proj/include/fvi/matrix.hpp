#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fvi {

/// Dense row-major matrix of doubles, the storage type used throughout the
/// library. Row-major keeps in-memory layout in the same order as serialized
/// tables.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using index_t = Eigen::Index;

/// Max-norm of a vector: max_i |v_i|. Zero for an empty vector.
inline double max_norm(const Vec &v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/// Induced max-norm of a matrix: the largest absolute row sum. This is the
/// operator norm matching the vector max-norm, so max_norm(M * v) <=
/// max_norm(M) * max_norm(v).
inline double max_norm(const Mat &m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline void require_finite(const Mat &m, const std::string &what) {
  if (!m.allFinite())
    throw std::invalid_argument(what + ": matrix has non-finite entries");
}

inline void require_finite(const Vec &v, const std::string &what) {
  if (!v.allFinite())
    throw std::invalid_argument(what + ": vector has non-finite entries");
}

}  // namespace fvi
