#pragma once

// Randomized matrix products: estimate A*B from a uniform sample of the inner
// dimension, with max-norm error control. When the factors only depend on a
// few state variables, the inner dimension collapses to the assignments of
// those variables, which turns an exponentially large product into a small
// exact one and shrinks the error thresholds by the same factor.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iterator>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fvi/factored.hpp"
#include "fvi/matrix.hpp"
#include "fvi/rng.hpp"

namespace fvi {

enum class ScopeAxis { columns, rows };

/**
 * Dense matrix with an optional scope annotation. When annotated, one axis is
 * indexed by the full states of `vars`, but the entries only depend on the
 * state's restriction to `scope`: any two columns (or rows) whose states agree
 * on the scope are identical. Construction via scoped_columns / scoped_rows
 * verifies that claim entry by entry while the state space is small.
 */
struct ScopedMatrix {
  Mat values;
  std::optional<VarSpace> vars;
  std::vector<index_t> scope;
  ScopeAxis axis = ScopeAxis::columns;

  bool annotated() const { return vars.has_value(); }
};

/// States-per-axis limit below which the scope annotation is verified.
inline constexpr std::uint64_t scoped_check_cap = 4096;

namespace detail {

inline ScopedMatrix make_scoped(Mat values, VarSpace vars, std::vector<index_t> scope,
                                ScopeAxis axis) {
  check_scope(vars, scope, "scoped matrix");
  const auto total = state_count(vars);
  if (!total)
    throw std::invalid_argument("scoped matrix: state space too large to index");
  const index_t dim = axis == ScopeAxis::columns ? values.cols() : values.rows();
  const char *axis_name = axis == ScopeAxis::columns ? "column" : "row";
  if (static_cast<std::uint64_t>(dim) != *total)
    throw std::invalid_argument("scoped matrix: " + std::to_string(dim) + " " + axis_name +
                                "s do not match the " + std::to_string(*total) + " states");
  require_finite(values, "scoped matrix");

  if (*total <= scoped_check_cap) {
    // Each state must carry the same values as the representative of its
    // scope class (the state with every out-of-scope variable set to zero).
    Assign x(static_cast<size_t>(vars.count()), 0);
    std::uint64_t s = 0;
    do {
      Assign rep(static_cast<size_t>(vars.count()), 0);
      for (index_t v : scope) rep[static_cast<size_t>(v)] = x[static_cast<size_t>(v)];
      const std::uint64_t r = state_index(vars, rep);
      const bool same =
          axis == ScopeAxis::columns
              ? (values.col(static_cast<index_t>(s)).array() ==
                 values.col(static_cast<index_t>(r)).array())
                    .all()
              : (values.row(static_cast<index_t>(s)).array() ==
                 values.row(static_cast<index_t>(r)).array())
                    .all();
      if (!same)
        throw std::invalid_argument("scoped matrix: " + std::string(axis_name) + " " +
                                    std::to_string(s) +
                                    " disagrees with its scope representative; entries must "
                                    "depend only on the annotated variables");
      ++s;
    } while (next_assign(vars, x));
  }

  ScopedMatrix out;
  out.values = std::move(values);
  out.vars = std::move(vars);
  out.scope = std::move(scope);
  out.axis = axis;
  return out;
}

}  // namespace detail

inline ScopedMatrix scoped_columns(Mat values, VarSpace vars, std::vector<index_t> scope) {
  return detail::make_scoped(std::move(values), std::move(vars), std::move(scope),
                             ScopeAxis::columns);
}

inline ScopedMatrix scoped_rows(Mat values, VarSpace vars, std::vector<index_t> scope) {
  return detail::make_scoped(std::move(values), std::move(vars), std::move(scope),
                             ScopeAxis::rows);
}

namespace detail {

inline std::vector<std::uint64_t> draw_product_indices(std::uint64_t n, std::uint64_t n_prime,
                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> indices(static_cast<size_t>(n_prime));
  for (auto &r : indices) r = bounded_draw(rng, n);
  return indices;
}

}  // namespace detail

/**
 * The estimate produced by a fixed index sample: (N / N') * sum_i of the
 * outer product of column indices[i] of `a` with row indices[i] of `b`.
 * The scaling multiplies before it divides, so integer-valued inputs with a
 * representable result come out exact.
 */
inline Mat sampled_product_at(const Mat &a, const Mat &b,
                              const std::vector<std::uint64_t> &indices) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("sampled product: " + std::to_string(a.cols()) +
                                " columns cannot meet " + std::to_string(b.rows()) + " rows");
  if (a.cols() == 0) throw std::invalid_argument("sampled product: empty inner dimension");
  if (indices.empty()) throw std::invalid_argument("sampled product: empty index sample");

  Mat ahat(a.rows(), static_cast<index_t>(indices.size()));
  Mat bhat(static_cast<index_t>(indices.size()), b.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::uint64_t>(a.cols()))
      throw std::invalid_argument("sampled product: index " + std::to_string(indices[i]) +
                                  " out of range");
    ahat.col(static_cast<index_t>(i)) = a.col(static_cast<index_t>(indices[i]));
    bhat.row(static_cast<index_t>(i)) = b.row(static_cast<index_t>(indices[i]));
  }
  Mat scaled = (ahat * bhat) * static_cast<double>(a.cols());
  scaled /= static_cast<double>(indices.size());
  return scaled;
}

/**
 * Unbiased estimate of a * b from n_prime uniform i.i.d. draws of the inner
 * index (the same draws select columns of `a` and rows of `b`). Deterministic
 * for a fixed seed.
 */
inline Mat sampled_product(const Mat &a, const Mat &b, std::uint64_t n_prime,
                           std::uint64_t seed) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("sampled product: " + std::to_string(a.cols()) +
                                " columns cannot meet " + std::to_string(b.rows()) + " rows");
  if (a.cols() == 0) throw std::invalid_argument("sampled product: empty inner dimension");
  if (n_prime == 0) throw std::invalid_argument("sampled product: sample count must be positive");
  return sampled_product_at(
      a, b, detail::draw_product_indices(static_cast<std::uint64_t>(a.cols()), n_prime, seed));
}

/// Error scale of the plain estimator: N * |a| * |b^T| in the induced
/// max-norm. Multiplied by epsilon this is the bound the sample-size planner
/// is calibrated against.
inline double dense_bound_scale(const Mat &a, const Mat &b) {
  return static_cast<double>(a.cols()) * max_norm(a) * max_norm(Mat(b.transpose()));
}

/**
 * Representatives of a product whose factors have local scope. `a` holds one
 * column per assignment of the combined scope, `b` one row, and
 *
 *   A * B = multiplier * a * b
 *
 * exactly, because every assignment of the remaining variables repeats the
 * same column/row pair. The representative for an assignment is the state
 * that extends it with zeros.
 */
struct CollapsedProduct {
  Mat a;
  Mat b;
  std::uint64_t multiplier = 1;
};

inline CollapsedProduct collapse_local_scope(const ScopedMatrix &a, const ScopedMatrix &b) {
  if (!a.annotated() || !b.annotated())
    throw std::invalid_argument("collapse: both factors need scope annotations");
  if (a.axis != ScopeAxis::columns)
    throw std::invalid_argument("collapse: the left factor must be scoped on its columns");
  if (b.axis != ScopeAxis::rows)
    throw std::invalid_argument("collapse: the right factor must be scoped on its rows");
  if (a.vars->sizes != b.vars->sizes)
    throw std::invalid_argument("collapse: the factors disagree on the variable space");
  if (a.values.cols() != b.values.rows())
    throw std::invalid_argument("collapse: " + std::to_string(a.values.cols()) +
                                " columns cannot meet " + std::to_string(b.values.rows()) +
                                " rows");

  const VarSpace &vs = *a.vars;
  std::vector<index_t> joint;
  std::merge(a.scope.begin(), a.scope.end(), b.scope.begin(), b.scope.end(),
             std::back_inserter(joint));
  joint.erase(std::unique(joint.begin(), joint.end()), joint.end());

  const index_t kept = scope_size(vs, joint);
  const std::uint64_t total = static_cast<std::uint64_t>(a.values.cols());

  CollapsedProduct out;
  out.a.resize(a.values.rows(), kept);
  out.b.resize(kept, b.values.cols());
  out.multiplier = total / static_cast<std::uint64_t>(kept);

  Assign x(static_cast<size_t>(vs.count()), 0);
  for (index_t j = 0; j < kept; ++j) {
    index_t rest = j;
    for (index_t v : joint) {
      const index_t size = vs.sizes[static_cast<size_t>(v)];
      x[static_cast<size_t>(v)] = rest % size;
      rest /= size;
    }
    const auto rep = static_cast<index_t>(state_index(vs, x));
    out.a.col(j) = a.values.col(rep);
    out.b.row(j) = b.values.row(rep);
  }
  return out;
}

namespace detail {

inline void check_term_shapes(const std::vector<ScopedMatrix> &terms, ScopeAxis axis,
                              const char *side) {
  if (terms.empty())
    throw std::invalid_argument(std::string("scoped product: the ") + side + " sum is empty");
  for (size_t i = 0; i < terms.size(); ++i) {
    const ScopedMatrix &t = terms[i];
    if (!t.annotated())
      throw std::invalid_argument(std::string("scoped product: ") + side + " term " +
                                  std::to_string(i) + " has no scope annotation");
    if (t.axis != axis)
      throw std::invalid_argument(std::string("scoped product: ") + side + " term " +
                                  std::to_string(i) + " is scoped on the wrong axis");
    if (t.vars->sizes != terms.front().vars->sizes)
      throw std::invalid_argument(std::string("scoped product: ") + side + " term " +
                                  std::to_string(i) + " disagrees on the variable space");
    if (t.values.rows() != terms.front().values.rows() ||
        t.values.cols() != terms.front().values.cols())
      throw std::invalid_argument(std::string("scoped product: ") + side + " term " +
                                  std::to_string(i) + " has mismatched dimensions");
  }
}

inline Mat sum_terms(const std::vector<ScopedMatrix> &terms) {
  Mat sum = terms.front().values;
  for (size_t i = 1; i < terms.size(); ++i) sum += terms[i].values;
  return sum;
}

}  // namespace detail

/**
 * Estimate (sum of a_terms) * (sum of b_terms) with one shared index sample.
 * Expanding the product into pairwise terms shows this is the same estimator
 * applied to every pair with common draws, which is all the additive error
 * analysis needs; with a single term per side it is bit-identical to
 * sampled_product.
 */
inline Mat sampled_product_scoped(const std::vector<ScopedMatrix> &a_terms,
                                  const std::vector<ScopedMatrix> &b_terms,
                                  std::uint64_t n_prime, std::uint64_t seed) {
  detail::check_term_shapes(a_terms, ScopeAxis::columns, "left");
  detail::check_term_shapes(b_terms, ScopeAxis::rows, "right");
  const Mat a = detail::sum_terms(a_terms);
  const Mat b = detail::sum_terms(b_terms);
  if (a.cols() != b.rows())
    throw std::invalid_argument("scoped product: " + std::to_string(a.cols()) +
                                " columns cannot meet " + std::to_string(b.rows()) + " rows");
  if (n_prime == 0) throw std::invalid_argument("scoped product: sample count must be positive");
  return sampled_product_at(
      a, b, detail::draw_product_indices(static_cast<std::uint64_t>(a.cols()), n_prime, seed));
}

/**
 * Error scale for sums of local-scope factors: N0 * p * q * max_i |A_i| *
 * max_j |B_j|, where N0 counts the assignments of the largest pairwise scope
 * union. Collapsing each of the p*q cross products and adding their error
 * bounds gives this in place of the dense scale, which it undercuts by about
 * N0 / N.
 */
inline double scoped_bound_scale(const std::vector<ScopedMatrix> &a_terms,
                                 const std::vector<ScopedMatrix> &b_terms) {
  detail::check_term_shapes(a_terms, ScopeAxis::columns, "left");
  detail::check_term_shapes(b_terms, ScopeAxis::rows, "right");
  const VarSpace &vs = *a_terms.front().vars;
  if (vs.sizes != b_terms.front().vars->sizes)
    throw std::invalid_argument("scoped product: the sides disagree on the variable space");

  index_t pairs_max = 1;
  for (const ScopedMatrix &a : a_terms)
    for (const ScopedMatrix &b : b_terms) {
      std::vector<index_t> joint;
      std::merge(a.scope.begin(), a.scope.end(), b.scope.begin(), b.scope.end(),
                 std::back_inserter(joint));
      joint.erase(std::unique(joint.begin(), joint.end()), joint.end());
      pairs_max = std::max(pairs_max, scope_size(vs, joint));
    }

  double a_max = 0.0, b_max = 0.0;
  for (const ScopedMatrix &a : a_terms) a_max = std::max(a_max, max_norm(a.values));
  for (const ScopedMatrix &b : b_terms) b_max = std::max(b_max, max_norm(b.values));
  return static_cast<double>(pairs_max) * static_cast<double>(a_terms.size()) *
         static_cast<double>(b_terms.size()) * a_max * b_max;
}

/// One multiplication problem for the verification harness: the factors and
/// the scale that, multiplied by epsilon, gives the error threshold to hold
/// the estimate against.
struct SketchTrial {
  Mat a;
  Mat b;
  double bound_scale = 0.0;
};

using SketchGenerator = std::function<SketchTrial(std::mt19937_64 &)>;

struct SketchReport {
  std::int64_t trials = 0;
  std::uint64_t sample_size = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  double max_error = 0.0;       ///< largest observed max-norm deviation from the exact product
  double threshold = 0.0;       ///< largest per-trial error threshold
  std::int64_t violations = 0;  ///< trials whose deviation exceeded their threshold
  double violation_rate = 0.0;
};

/**
 * Empirical check of the error threshold: run `trials` independent sampled
 * products on freshly generated factor pairs and count how often the max-norm
 * error exceeds epsilon times the trial's bound scale. The intended reading
 * is violation_rate <= delta; the harness only reports, it never asserts.
 *
 * Trial t draws its matrices from an engine seeded with mix_seed(seed, t) and
 * its sample indices from a further seed off that engine, so trials are
 * independent streams and the aggregate does not depend on evaluation order.
 */
inline SketchReport verify_bound(const SketchGenerator &make_trial, std::uint64_t n_prime,
                                 double eps, double delta, std::int64_t trials,
                                 std::uint64_t seed) {
  if (!make_trial) throw std::invalid_argument("bound check: no trial generator");
  if (trials < 1) throw std::invalid_argument("bound check: trial count must be positive");
  if (n_prime == 0) throw std::invalid_argument("bound check: sample count must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("bound check: epsilon must be positive");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw std::invalid_argument("bound check: delta must lie in (0, 1)");

  SketchReport report;
  report.trials = trials;
  report.sample_size = n_prime;
  report.epsilon = eps;
  report.delta = delta;

  for (std::int64_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(t)));
    const SketchTrial trial = make_trial(rng);
    const Mat exact = trial.a * trial.b;
    const Mat estimate = sampled_product(trial.a, trial.b, n_prime, rng());
    const double error = max_norm(Mat(estimate - exact));
    const double threshold = eps * trial.bound_scale;
    report.max_error = std::max(report.max_error, error);
    report.threshold = std::max(report.threshold, threshold);
    if (error > threshold) ++report.violations;
  }
  report.violation_rate =
      static_cast<double>(report.violations) / static_cast<double>(report.trials);
  return report;
}

/// Trial generator drawing dense factors with entries uniform in [-1, 1),
/// checked against the dense error scale.
inline SketchGenerator uniform_dense_generator(index_t rows, index_t inner, index_t cols) {
  if (rows < 1 || inner < 1 || cols < 1)
    throw std::invalid_argument("bound check: matrix dimensions must be positive");
  return [rows, inner, cols](std::mt19937_64 &rng) {
    SketchTrial trial;
    trial.a.resize(rows, inner);
    trial.b.resize(inner, cols);
    for (index_t i = 0; i < rows; ++i)
      for (index_t j = 0; j < inner; ++j) trial.a(i, j) = 2.0 * detail::unit_real(rng) - 1.0;
    for (index_t i = 0; i < inner; ++i)
      for (index_t j = 0; j < cols; ++j) trial.b(i, j) = 2.0 * detail::unit_real(rng) - 1.0;
    trial.bound_scale = dense_bound_scale(trial.a, trial.b);
    return trial;
  };
}

}  // namespace fvi
