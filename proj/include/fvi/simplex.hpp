#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fvi/matrix.hpp"

namespace fvi {

enum class RowSense { le, eq, ge };
enum class LpStatus { optimal, infeasible, unbounded };

/**
 * Linear program
 *
 *   min (or max)  objective . x
 *   subject to    constraints * x  (<= | = | >=)  rhs,   row by row
 *                 lower[j] <= x_j <= upper[j]     where bounds are given
 *
 * Variables without bounds are free. Empty `lower`/`upper` vectors mean no
 * bounds at all.
 */
struct LpProblem {
  Vec objective;
  Mat constraints;
  std::vector<RowSense> senses;
  Vec rhs;
  std::vector<std::optional<double>> lower;
  std::vector<std::optional<double>> upper;
  bool maximize = false;
};

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  Vec x;  // primal values, empty unless optimal
  double objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Eliminates the pivot column everywhere except the pivot row. The last
// tableau row is the objective row and takes part in the elimination.
inline void lp_pivot(Mat &t, std::vector<index_t> &basis, index_t row, index_t col) {
  t.row(row) /= t(row, col);
  for (index_t i = 0; i < t.rows(); ++i) {
    if (i == row) continue;
    const double f = t(i, col);
    if (f != 0.0) t.row(i) -= f * t.row(row);
  }
  basis[static_cast<size_t>(row)] = col;
}

// Rebuild the bottom row's reduced costs for `cost` from the current tableau
// rows. The row accumulates roundoff from every pivot — amplified badly when
// a pivot lands on a near-degenerate element — and a stale entry can stop the
// iteration early or fake an unbounded ray; the rebuilt row is exact relative
// to the rows it is derived from.
inline void rebuild_objective_row(Mat &t, const std::vector<index_t> &basis,
                                  const Vec &cost) {
  const index_t rows = t.rows() - 1;
  const index_t total = t.cols() - 1;
  t.row(rows).setZero();
  t.row(rows).head(total) = cost.transpose();
  for (index_t i = 0; i < rows; ++i) {
    const double cb = cost(basis[static_cast<size_t>(i)]);
    if (cb != 0.0) t.row(rows) -= cb * t.row(i);
  }
}

// Recompute the working rows as B⁻¹·T₀ from the pristine initial rows and the
// current basis, resetting accumulated pivot roundoff to solve-level accuracy.
inline void refactorize(Mat &t, const Mat &t0, const std::vector<index_t> &basis) {
  const index_t rows = t.rows() - 1;
  if (rows == 0) return;
  Mat b(rows, rows);
  for (index_t i = 0; i < rows; ++i)
    b.col(i) = t0.col(basis[static_cast<size_t>(i)]).head(rows);
  t.topRows(rows) = b.partialPivLu().solve(t0);
}

// Bland's rule: enter the lowest-index improving column, leave on the
// minimum ratio with ties broken by the lowest basic variable index. The
// fixed rule is deterministic and cannot cycle on an exact tableau. In-place
// pivot updates drift away from exactness — badly so after a pivot on a
// near-degenerate element — which voids that guarantee, so when the pristine
// rows are supplied the tableau is refactorized at a fixed cadence.
inline LpStatus lp_iterate(Mat &t, std::vector<index_t> &basis,
                           const std::vector<bool> &allowed, double tol,
                           const Mat *pristine = nullptr, const Vec *cost = nullptr) {
  const index_t m = t.rows() - 1;   // objective row sits at the bottom
  const index_t last = t.cols() - 1;
  const double pivot_tol = 1e-11;
  const long max_pivots = 20000 + 200 * static_cast<long>(t.rows() + t.cols());
  for (long pivots = 0;; ++pivots) {
    if (pivots > max_pivots)
      throw std::runtime_error("simplex_solve: pivot limit exceeded");
    if (pristine != nullptr && pivots > 0 && pivots % 64 == 0) {
      refactorize(t, *pristine, basis);
      rebuild_objective_row(t, basis, *cost);
    }
    index_t enter = -1;
    for (index_t j = 0; j < last; ++j) {
      if (!allowed[static_cast<size_t>(j)]) continue;
      if (t(m, j) < -tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return LpStatus::optimal;
    index_t leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (index_t i = 0; i < m; ++i) {
      const double a = t(i, enter);
      if (a <= pivot_tol) continue;
      const double ratio = t(i, last) / a;
      if (leave < 0 || ratio < best - 1e-12) {
        best = ratio;
        leave = i;
      } else if (ratio <= best + 1e-12 &&
                 basis[static_cast<size_t>(i)] < basis[static_cast<size_t>(leave)]) {
        leave = i;
        if (ratio < best) best = ratio;
      }
    }
    if (leave < 0) return LpStatus::unbounded;
    lp_pivot(t, basis, leave, enter);
  }
}

// Bland iterations with the tableau refactorized and the objective row
// re-derived between rounds. A round ends when lp_iterate goes stationary (or
// sees a ray); the verdict only stands if it survives a clean tableau. An
// unbounded verdict is confirmed by reaching the same basis twice in
// consecutive rounds under fresh rows.
inline LpStatus lp_iterate_refreshed(Mat &t, const Mat &t0,
                                     std::vector<index_t> &basis,
                                     const std::vector<bool> &allowed,
                                     const Vec &cost, double tol) {
  const index_t bottom = t.rows() - 1;
  const index_t last = t.cols() - 1;
  std::vector<index_t> prev;
  for (int round = 0; round < 50; ++round) {
    const LpStatus st = lp_iterate(t, basis, allowed, tol, &t0, &cost);
    refactorize(t, t0, basis);
    rebuild_objective_row(t, basis, cost);
    bool improving = false;
    for (index_t j = 0; j < last; ++j) {
      if (!allowed[static_cast<size_t>(j)]) continue;
      if (t(bottom, j) < -tol) {
        improving = true;
        break;
      }
    }
    if (!improving) return LpStatus::optimal;
    if (st == LpStatus::unbounded && basis == prev) return LpStatus::unbounded;
    prev = basis;
  }
  throw std::runtime_error("simplex_solve: tableau failed to settle");
}

}  // namespace detail

/**
 * Dense two-phase simplex.
 *
 * Bounded variables are shifted to non-negative ones, free variables are
 * split, rows get slack/surplus variables, and phase one drives a set of
 * artificial variables to zero before phase two optimizes the real
 * objective. `tol` is used both as the optimality threshold on reduced costs
 * and (scaled by the right-hand side magnitude) as the phase-one feasibility
 * threshold.
 */
inline LpSolution simplex_solve(const LpProblem &p, double tol = 1e-9) {
  const index_t n = p.objective.size();
  const index_t m = p.constraints.rows();
  if (p.constraints.cols() != n && !(m == 0 && n >= 0))
    throw std::invalid_argument("simplex_solve: constraint matrix width does not match objective length");
  if (p.rhs.size() != m || static_cast<index_t>(p.senses.size()) != m)
    throw std::invalid_argument("simplex_solve: senses/rhs length does not match constraint rows");
  if (!p.lower.empty() && static_cast<index_t>(p.lower.size()) != n)
    throw std::invalid_argument("simplex_solve: lower bound list has wrong length");
  if (!p.upper.empty() && static_cast<index_t>(p.upper.size()) != n)
    throw std::invalid_argument("simplex_solve: upper bound list has wrong length");
  require_finite(p.objective, "simplex_solve objective");
  if (m > 0) {
    require_finite(p.constraints, "simplex_solve constraints");
    require_finite(p.rhs, "simplex_solve rhs");
  }

  // Variable substitutions: x_j = shift + sign * y_col (+ optionally - y_neg
  // for a free split). Upper bounds on shifted variables become extra rows.
  struct Sub {
    double shift = 0.0;
    double sign = 1.0;
    index_t col = -1;
    index_t neg = -1;
  };
  std::vector<Sub> subs(static_cast<size_t>(n));
  struct BoundRow {
    index_t col;
    double rhs;
  };
  std::vector<BoundRow> bound_rows;
  index_t ny = 0;
  for (index_t j = 0; j < n; ++j) {
    std::optional<double> lo = p.lower.empty() ? std::nullopt : p.lower[static_cast<size_t>(j)];
    std::optional<double> hi = p.upper.empty() ? std::nullopt : p.upper[static_cast<size_t>(j)];
    if ((lo && !std::isfinite(*lo)) || (hi && !std::isfinite(*hi)))
      throw std::invalid_argument("simplex_solve: non-finite variable bound");
    Sub &s = subs[static_cast<size_t>(j)];
    if (lo && hi && *lo > *hi) return LpSolution{LpStatus::infeasible, {}, {}};
    if (lo) {
      s.shift = *lo;
      s.sign = 1.0;
      s.col = ny++;
      if (hi) bound_rows.push_back({s.col, *hi - *lo});
    } else if (hi) {
      s.shift = *hi;
      s.sign = -1.0;
      s.col = ny++;
    } else {
      s.col = ny++;
      s.neg = ny++;
    }
  }

  const index_t rows = m + static_cast<index_t>(bound_rows.size());
  Mat a = Mat::Zero(rows, ny);
  Vec b = Vec::Zero(rows);
  std::vector<RowSense> senses(static_cast<size_t>(rows), RowSense::le);
  for (index_t i = 0; i < m; ++i) {
    double shift_total = 0.0;
    for (index_t j = 0; j < n; ++j) {
      const double c = p.constraints(i, j);
      if (c == 0.0) continue;
      const Sub &s = subs[static_cast<size_t>(j)];
      a(i, s.col) += c * s.sign;
      if (s.neg >= 0) a(i, s.neg) -= c;
      shift_total += c * s.shift;
    }
    b(i) = p.rhs(i) - shift_total;
    senses[static_cast<size_t>(i)] = p.senses[static_cast<size_t>(i)];
  }
  for (size_t k = 0; k < bound_rows.size(); ++k) {
    const index_t i = m + static_cast<index_t>(k);
    a(i, bound_rows[k].col) = 1.0;
    b(i) = bound_rows[k].rhs;
  }
  // Normalize right-hand sides to be non-negative.
  for (index_t i = 0; i < rows; ++i) {
    if (b(i) < 0.0) {
      a.row(i) = -a.row(i);
      b(i) = -b(i);
      if (senses[static_cast<size_t>(i)] == RowSense::le)
        senses[static_cast<size_t>(i)] = RowSense::ge;
      else if (senses[static_cast<size_t>(i)] == RowSense::ge)
        senses[static_cast<size_t>(i)] = RowSense::le;
    }
  }

  index_t n_slack = 0, n_art = 0;
  for (auto s : senses) {
    if (s != RowSense::eq) ++n_slack;
    if (s != RowSense::le) ++n_art;
  }
  const index_t slack0 = ny;
  const index_t art0 = ny + n_slack;
  const index_t total = ny + n_slack + n_art;

  Mat t = Mat::Zero(rows + 1, total + 1);
  t.block(0, 0, rows, ny) = a;
  t.col(total).head(rows) = b;
  std::vector<index_t> basis(static_cast<size_t>(rows), -1);
  index_t s_at = slack0, a_at = art0;
  for (index_t i = 0; i < rows; ++i) {
    switch (senses[static_cast<size_t>(i)]) {
      case RowSense::le:
        t(i, s_at) = 1.0;
        basis[static_cast<size_t>(i)] = s_at++;
        break;
      case RowSense::ge:
        t(i, s_at++) = -1.0;
        [[fallthrough]];
      case RowSense::eq:
        t(i, a_at) = 1.0;
        basis[static_cast<size_t>(i)] = a_at++;
        break;
    }
  }

  // Pristine copy of the constraint rows for refactorization.
  Mat t0 = t.topRows(rows);

  // Phase one: minimize the sum of artificial variables.
  if (n_art > 0) {
    Vec art_cost = Vec::Zero(total);
    art_cost.tail(n_art).setOnes();
    detail::rebuild_objective_row(t, basis, art_cost);
    std::vector<bool> allowed(static_cast<size_t>(total), true);
    const LpStatus settled = detail::lp_iterate_refreshed(t, t0, basis, allowed, art_cost, tol);
    // Nonbasic artificials are exactly zero, so summing the basic ones reads
    // the infeasibility straight off the tableau instead of trusting the
    // drift-prone objective cell.
    double infeas = 0.0;
    for (index_t i = 0; i < rows; ++i)
      if (basis[static_cast<size_t>(i)] >= art0) infeas += t(i, total);
    const double feas_eps = tol * (1.0 + (rows > 0 ? b.cwiseAbs().maxCoeff() : 0.0));
    if (infeas > feas_eps) {
      if (settled != LpStatus::optimal)
        throw std::runtime_error("simplex_solve: phase one broke down numerically");
      return LpSolution{LpStatus::infeasible, {}, {}};
    }
    // Pivot leftover artificial variables out of the basis; rows that offer
    // no pivot are redundant and get dropped.
    std::vector<index_t> keep;
    for (index_t i = 0; i < rows; ++i) {
      if (basis[static_cast<size_t>(i)] < art0) {
        keep.push_back(i);
        continue;
      }
      index_t piv = -1;
      for (index_t j = 0; j < art0; ++j)
        if (std::abs(t(i, j)) > 1e-9) {
          piv = j;
          break;
        }
      if (piv >= 0) {
        detail::lp_pivot(t, basis, i, piv);
        keep.push_back(i);
      }
    }
    if (static_cast<index_t>(keep.size()) < rows) {
      Mat t2(static_cast<index_t>(keep.size()) + 1, t.cols());
      Mat t02(static_cast<index_t>(keep.size()), t0.cols());
      std::vector<index_t> basis2;
      for (size_t i = 0; i < keep.size(); ++i) {
        t2.row(static_cast<index_t>(i)) = t.row(keep[i]);
        t02.row(static_cast<index_t>(i)) = t0.row(keep[i]);
        basis2.push_back(basis[static_cast<size_t>(keep[i])]);
      }
      t2.row(static_cast<index_t>(keep.size())).setZero();
      t = std::move(t2);
      t0 = std::move(t02);
      basis = std::move(basis2);
    }
  }

  // Phase two objective row: reduced costs of the real objective under the
  // current basis.
  const index_t rows2 = t.rows() - 1;
  Vec cost = Vec::Zero(total);
  for (index_t j = 0; j < n; ++j) {
    const Sub &s = subs[static_cast<size_t>(j)];
    const double c = p.maximize ? -p.objective(j) : p.objective(j);
    cost(s.col) += c * s.sign;
    if (s.neg >= 0) cost(s.neg) -= c;
  }
  detail::rebuild_objective_row(t, basis, cost);
  std::vector<bool> allowed(static_cast<size_t>(total), true);
  for (index_t j = art0; j < total; ++j) allowed[static_cast<size_t>(j)] = false;
  if (detail::lp_iterate_refreshed(t, t0, basis, allowed, cost, tol) == LpStatus::unbounded)
    return LpSolution{LpStatus::unbounded, {}, {}};

  Vec y = Vec::Zero(total);
  for (index_t i = 0; i < rows2; ++i)
    y(basis[static_cast<size_t>(i)]) = t(i, t.cols() - 1);
  LpSolution sol;
  sol.status = LpStatus::optimal;
  sol.x = Vec::Zero(n);
  for (index_t j = 0; j < n; ++j) {
    const Sub &s = subs[static_cast<size_t>(j)];
    sol.x(j) = s.shift + s.sign * y(s.col) - (s.neg >= 0 ? y(s.neg) : 0.0);
  }
  sol.objective = p.objective.size() > 0 ? p.objective.dot(sol.x) : 0.0;
  return sol;
}

}  // namespace fvi
