#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fvi/simplex.hpp"

namespace fvi {

/**
 * Constrained least squares
 *
 *   min_w  || H w - v ||_2^2   subject to   || H w ||_inf <= cap
 *
 * solved with Frank-Wolfe: each round minimizes the linearized objective
 * over the feasible polytope (a small LP handed to the simplex solver) and
 * takes an exact line-search step toward that vertex. Iterates stay feasible
 * by convexity. Stops when the duality gap falls below gap_tol, or after
 * max_iters rounds.
 *
 * The LP is never unbounded: directions in the null space of H leave both
 * the objective and the constraints unchanged.
 */
inline Vec frank_wolfe_cls(const Mat &h, const Vec &v, double cap,
                           double gap_tol = 1e-8, long max_iters = 10000) {
  require_finite(h, "frank_wolfe_cls basis");
  require_finite(v, "frank_wolfe_cls target");
  if (h.rows() != v.size())
    throw std::invalid_argument("frank_wolfe_cls: basis rows do not match target length");
  if (!std::isfinite(cap) || cap < 0.0)
    throw std::invalid_argument("frank_wolfe_cls: cap must be finite and non-negative");

  const index_t n = h.rows(), k = h.cols();
  LpProblem lmo;
  lmo.constraints = Mat(2 * n, k);
  lmo.constraints.topRows(n) = h;
  lmo.constraints.bottomRows(n) = -h;
  lmo.senses.assign(static_cast<size_t>(2 * n), RowSense::le);
  lmo.rhs = Vec::Constant(2 * n, cap);

  Vec w = Vec::Zero(k);
  for (long iter = 0; iter < max_iters; ++iter) {
    const Vec resid = h * w - v;
    lmo.objective = 2.0 * (h.transpose() * resid);
    const LpSolution sol = simplex_solve(lmo);
    if (sol.status != LpStatus::optimal)
      throw std::runtime_error("frank_wolfe_cls: linear subproblem failed to solve");
    const double gap = lmo.objective.dot(w - sol.x);
    if (gap <= gap_tol) break;
    const Vec d = sol.x - w;
    const Vec hd = h * d;
    const double denom = hd.squaredNorm();
    if (denom <= 0.0) break;
    const double eta = std::clamp(-hd.dot(resid) / denom, 0.0, 1.0);
    w += eta * d;
  }
  return w;
}

}  // namespace fvi
