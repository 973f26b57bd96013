#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "fvi/frank_wolfe.hpp"
#include "fvi/matrix.hpp"
#include "fvi/pinv.hpp"
#include "fvi/simplex.hpp"

namespace fvi {

/**
 * Projection operators from value space (length N) back to weight space
 * (length K), given a basis matrix H (N x K). Fixed-point iteration with a
 * projection step only stays stable when v -> H G(v) is a max-norm
 * non-expansion, which is what distinguishes the kinds below:
 *
 *   l2     plain least squares, w = pinv(H) v; can expand and diverge
 *   l2c    least squares constrained to ||H w||_inf <= ||v||_inf
 *   linf   minimize ||H w - v||_inf (linear program)
 *   linfc  same with the additional cap ||H w||_inf <= ||v||_inf
 *   l1     minimize ||H w - v||_1, smallest ||H w||_inf among the optima
 *   npinv  normalized least squares, rescaled so that ||H G||_inf = 1
 *   nht    normalized transpose, rescaled the same way
 *   linear explicitly supplied matrix G
 */
enum class ProjKind { l2, l2c, linf, linfc, l1, npinv, nht, linear };

inline const char *to_string(ProjKind kind) {
  switch (kind) {
    case ProjKind::l2: return "l2";
    case ProjKind::l2c: return "l2c";
    case ProjKind::linf: return "linf";
    case ProjKind::linfc: return "linfc";
    case ProjKind::l1: return "l1";
    case ProjKind::npinv: return "npinv";
    case ProjKind::nht: return "nht";
    case ProjKind::linear: return "linear";
  }
  return "?";
}

inline ProjKind parse_proj_kind(const std::string &name) {
  if (name == "l2") return ProjKind::l2;
  if (name == "l2c") return ProjKind::l2c;
  if (name == "linf") return ProjKind::linf;
  if (name == "linfc") return ProjKind::linfc;
  if (name == "l1") return ProjKind::l1;
  if (name == "npinv") return ProjKind::npinv;
  if (name == "nht") return ProjKind::nht;
  throw std::invalid_argument("unknown projection kind '" + name +
                              "' (expected l2, l2c, linf, linfc, l1, npinv or nht)");
}

/// Least squares: w = pinv(H) v.
inline Vec project_l2(const Mat &h, const Vec &v) {
  require_finite(v, "project_l2");
  if (h.rows() != v.size())
    throw std::invalid_argument("project_l2: basis rows do not match value length");
  return mat_pinv(h) * v;
}

/// Least squares subject to ||H w||_inf <= ||v||_inf.
inline Vec project_l2_constrained(const Mat &h, const Vec &v) {
  require_finite(v, "project_l2_constrained");
  if (h.rows() != v.size())
    throw std::invalid_argument("project_l2_constrained: basis rows do not match value length");
  return frank_wolfe_cls(h, v, max_norm(v));
}

namespace detail {

// min t  s.t.  -t <= (H w - v)_x <= t, optionally also -cap <= (H w)_x <= cap.
inline Vec linf_lp(const Mat &h, const Vec &v, std::optional<double> cap) {
  const index_t n = h.rows(), k = h.cols();
  const index_t rows = cap ? 4 * n : 2 * n;
  LpProblem p;
  p.objective = Vec::Zero(k + 1);
  p.objective(k) = 1.0;
  p.constraints = Mat::Zero(rows, k + 1);
  p.rhs = Vec::Zero(rows);
  p.senses.assign(static_cast<size_t>(rows), RowSense::le);
  p.constraints.block(0, 0, n, k) = h;
  p.constraints.block(n, 0, n, k) = -h;
  p.constraints.col(k).head(2 * n).setConstant(-1.0);
  p.rhs.head(n) = v;
  p.rhs.segment(n, n) = -v;
  if (cap) {
    p.constraints.block(2 * n, 0, n, k) = h;
    p.constraints.block(3 * n, 0, n, k) = -h;
    p.rhs.tail(2 * n).setConstant(*cap);
  }
  p.lower.assign(static_cast<size_t>(k + 1), std::nullopt);
  p.upper.assign(static_cast<size_t>(k + 1), std::nullopt);
  p.lower[static_cast<size_t>(k)] = 0.0;
  const LpSolution sol = simplex_solve(p);
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("max-norm projection: linear program failed to solve");
  return sol.x.head(k);
}

}  // namespace detail

/// Max-norm projection: minimize ||H w - v||_inf.
inline Vec project_linf(const Mat &h, const Vec &v) {
  require_finite(v, "project_linf");
  if (h.rows() != v.size())
    throw std::invalid_argument("project_linf: basis rows do not match value length");
  return detail::linf_lp(h, v, std::nullopt);
}

/// Max-norm projection subject to ||H w||_inf <= ||v||_inf.
inline Vec project_linf_constrained(const Mat &h, const Vec &v) {
  require_finite(v, "project_linf_constrained");
  if (h.rows() != v.size())
    throw std::invalid_argument("project_linf_constrained: basis rows do not match value length");
  return detail::linf_lp(h, v, max_norm(v));
}

/**
 * L1 projection: minimize ||H w - v||_1 with the residual split into
 * positive and negative parts. Among the optima (the L1 problem often has a
 * whole face of them) a second program picks the one with the smallest
 * ||H w||_inf. Even this most conservative selection does not make v -> H w
 * a max-norm non-expansion: for H = [1,1,1,1,2]^T and v = (1,1,1,1,0.8) the
 * unique minimizer is w = 1 with ||H w||_inf = 2 > ||v||_inf = 1. Use
 * check_nonexpansion to measure the behaviour on a concrete basis.
 */
inline Vec project_l1(const Mat &h, const Vec &v) {
  require_finite(v, "project_l1");
  if (h.rows() != v.size())
    throw std::invalid_argument("project_l1: basis rows do not match value length");
  const index_t n = h.rows(), k = h.cols();

  // Stage one: variables (w, p, q), H w - p + q = v, minimize sum(p + q).
  LpProblem p1;
  p1.objective = Vec::Zero(k + 2 * n);
  p1.objective.tail(2 * n).setOnes();
  p1.constraints = Mat::Zero(n, k + 2 * n);
  p1.constraints.block(0, 0, n, k) = h;
  p1.constraints.block(0, k, n, n) = -Mat::Identity(n, n);
  p1.constraints.block(0, k + n, n, n) = Mat::Identity(n, n);
  p1.senses.assign(static_cast<size_t>(n), RowSense::eq);
  p1.rhs = v;
  p1.lower.assign(static_cast<size_t>(k + 2 * n), 0.0);
  p1.upper.assign(static_cast<size_t>(k + 2 * n), std::nullopt);
  for (index_t j = 0; j < k; ++j) p1.lower[static_cast<size_t>(j)] = std::nullopt;
  const LpSolution first = simplex_solve(p1);
  if (first.status != LpStatus::optimal)
    throw std::runtime_error("project_l1: first linear program failed to solve");

  // Stage two: restrict to the optimal face and minimize u >= |(H w)_x|.
  LpProblem p2;
  const index_t vars = k + 2 * n + 1;
  const index_t u_col = k + 2 * n;
  p2.objective = Vec::Zero(vars);
  p2.objective(u_col) = 1.0;
  p2.constraints = Mat::Zero(3 * n + 1, vars);
  p2.rhs = Vec::Zero(3 * n + 1);
  p2.senses.assign(static_cast<size_t>(3 * n + 1), RowSense::le);
  p2.constraints.block(0, 0, n, k) = h;
  p2.constraints.block(0, k, n, n) = -Mat::Identity(n, n);
  p2.constraints.block(0, k + n, n, n) = Mat::Identity(n, n);
  for (index_t i = 0; i < n; ++i) p2.senses[static_cast<size_t>(i)] = RowSense::eq;
  p2.rhs.head(n) = v;
  p2.constraints.row(n).segment(k, 2 * n).setOnes();
  p2.rhs(n) = first.objective + 1e-9;
  p2.constraints.block(n + 1, 0, n, k) = h;
  p2.constraints.col(u_col).segment(n + 1, n).setConstant(-1.0);
  p2.constraints.block(2 * n + 1, 0, n, k) = -h;
  p2.constraints.col(u_col).tail(n).setConstant(-1.0);
  p2.lower.assign(static_cast<size_t>(vars), 0.0);
  p2.upper.assign(static_cast<size_t>(vars), std::nullopt);
  for (index_t j = 0; j < k; ++j) p2.lower[static_cast<size_t>(j)] = std::nullopt;
  const LpSolution second = simplex_solve(p2);
  if (second.status != LpStatus::optimal)
    throw std::runtime_error("project_l1: second linear program failed to solve");
  return second.x.head(k);
}

/// Stage one of the normalization: divide every entry G(k, x) by the product
/// of the k-th absolute column sum of H and the x-th absolute column sum of
/// G. Entries whose denominator is zero become zero.
inline Mat normalize_linear_raw(const Mat &g, const Mat &h) {
  if (g.rows() != h.cols() || g.cols() != h.rows())
    throw std::invalid_argument("normalize_linear: G must be shaped like the transpose of H");
  require_finite(g, "normalize_linear");
  require_finite(h, "normalize_linear");
  const Vec h_colsum = h.cwiseAbs().colwise().sum();
  const Vec g_colsum = g.cwiseAbs().colwise().sum();
  Mat out = Mat::Zero(g.rows(), g.cols());
  for (index_t k = 0; k < g.rows(); ++k)
    for (index_t x = 0; x < g.cols(); ++x) {
      const double den = h_colsum(k) * g_colsum(x);
      if (den > 0.0) out(k, x) = g(k, x) / den;
    }
  return out;
}

/**
 * Normalization of a linear projection matrix. After the entrywise rescaling
 * of normalize_linear_raw the result is divided by ||H G||_inf, which pins
 * the operator norm of the composition at exactly one (the raw rescaling
 * alone does not achieve that for general H), making v -> H G v a max-norm
 * non-expansion. A zero product is left untouched.
 */
inline Mat normalize_linear(const Mat &g, const Mat &h) {
  Mat out = normalize_linear_raw(g, h);
  const double c = max_norm(Mat(h * out));
  if (c > 0.0) out /= c;
  return out;
}

/**
 * A ready-to-apply projection operator. Linear kinds carry their K x N
 * matrix; the others keep the basis and run their optimization per call.
 */
struct Projector {
  ProjKind kind = ProjKind::linear;
  Mat h;  // N x K basis
  Mat g;  // K x N, only for linear kinds

  bool linear() const {
    return kind == ProjKind::l2 || kind == ProjKind::npinv || kind == ProjKind::nht ||
           kind == ProjKind::linear;
  }

  Vec apply(const Vec &v) const {
    switch (kind) {
      case ProjKind::l2:
      case ProjKind::npinv:
      case ProjKind::nht:
      case ProjKind::linear:
        if (g.cols() != v.size())
          throw std::invalid_argument("projector: value length does not match");
        return g * v;
      case ProjKind::l2c: return project_l2_constrained(h, v);
      case ProjKind::linf: return project_linf(h, v);
      case ProjKind::linfc: return project_linf_constrained(h, v);
      case ProjKind::l1: return project_l1(h, v);
    }
    throw std::logic_error("projector: unknown kind");
  }
};

inline Projector make_projector(ProjKind kind, const Mat &h) {
  require_finite(h, "make_projector");
  if (h.rows() == 0 || h.cols() == 0)
    throw std::invalid_argument("make_projector: basis must be non-empty");
  Projector p;
  p.kind = kind;
  p.h = h;
  switch (kind) {
    case ProjKind::l2: p.g = mat_pinv(h); break;
    case ProjKind::npinv: p.g = normalize_linear(mat_pinv(h), h); break;
    case ProjKind::nht: p.g = normalize_linear(Mat(h.transpose()), h); break;
    case ProjKind::linear:
      throw std::invalid_argument("make_projector: use make_linear_projector for explicit matrices");
    default: break;
  }
  return p;
}

/// Wraps an explicitly supplied matrix G as a projection operator.
inline Projector make_linear_projector(Mat g, Mat h) {
  if (g.rows() != h.cols() || g.cols() != h.rows())
    throw std::invalid_argument("make_linear_projector: G must be shaped like the transpose of H");
  Projector p;
  p.kind = ProjKind::linear;
  p.h = std::move(h);
  p.g = std::move(g);
  return p;
}

struct NonExpansionReport {
  std::int64_t trials = 0;
  std::int64_t violations = 0;   // sampled ratios above 1 + 1e-7
  double max_ratio = 0.0;        // max ||H p(v) - H p(v')||_inf / ||v - v'||_inf
  double max_growth = 0.0;       // max ||H p(v)||_inf / ||v||_inf
  std::optional<double> op_norm; // ||H G||_inf, linear kinds only
};

/**
 * Samples pairs (v, v') and measures how much the map v -> H p(v) stretches
 * max-norm distances. For linear kinds the exact operator norm ||H G||_inf
 * is reported as well; the sampled ratios can only ever approach it from
 * below.
 */
inline NonExpansionReport check_nonexpansion(const Mat &h, const Projector &proj,
                                             std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("check_nonexpansion: trials must be positive");
  NonExpansionReport report;
  report.trials = trials;
  if (proj.linear()) report.op_norm = max_norm(Mat(h * proj.g));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const index_t n = h.rows();
  for (std::int64_t trial = 0; trial < trials; ++trial) {
    Vec v(n), v2(n);
    for (index_t i = 0; i < n; ++i) v(i) = u(rng);
    for (index_t i = 0; i < n; ++i) v2(i) = u(rng);
    const Vec hv = h * proj.apply(v);
    const Vec hv2 = h * proj.apply(v2);
    const double dist = max_norm(Vec(v - v2));
    if (dist > 1e-12) {
      const double ratio = max_norm(Vec(hv - hv2)) / dist;
      report.max_ratio = std::max(report.max_ratio, ratio);
      if (ratio > 1.0 + 1e-7) ++report.violations;
    }
    const double vn = max_norm(v);
    if (vn > 1e-12) report.max_growth = std::max(report.max_growth, max_norm(hv) / vn);
  }
  return report;
}

}  // namespace fvi
