#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvi/matrix.hpp"
#include "fvi/projection.hpp"

namespace fvi {

/**
 * A flat (enumerated-state) Markov decision process: one row-stochastic
 * N x N transition matrix and one length-N reward vector per action, a
 * discount in [0, 1), and a designated start state. This is the exact,
 * no-approximation representation that the factored machinery is checked
 * against.
 */
struct FlatMdp {
  std::vector<Mat> p;
  std::vector<Vec> r;
  double gamma = 0.9;
  index_t start = 0;

  index_t states() const { return p.empty() ? 0 : p.front().rows(); }
  index_t actions() const { return static_cast<index_t>(p.size()); }
};

inline void validate(const FlatMdp &mdp) {
  if (mdp.p.empty()) throw std::invalid_argument("flat mdp: needs at least one action");
  if (mdp.p.size() != mdp.r.size())
    throw std::invalid_argument("flat mdp: transition and reward action counts differ");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    throw std::invalid_argument("flat mdp: discount must lie in [0, 1)");
  const index_t n = mdp.p.front().rows();
  if (n < 1) throw std::invalid_argument("flat mdp: needs at least one state");
  if (mdp.start < 0 || mdp.start >= n)
    throw std::invalid_argument("flat mdp: start state out of range");
  for (size_t a = 0; a < mdp.p.size(); ++a) {
    const Mat &pa = mdp.p[a];
    const std::string where = "flat mdp: action " + std::to_string(a);
    if (pa.rows() != n || pa.cols() != n)
      throw std::invalid_argument(where + " has a misshapen transition matrix");
    require_finite(pa, where);
    for (index_t x = 0; x < n; ++x) {
      if (pa.row(x).minCoeff() < 0.0)
        throw std::invalid_argument(where + " row " + std::to_string(x) +
                                    " has a negative probability");
      if (std::abs(pa.row(x).sum() - 1.0) > 1e-9)
        throw std::invalid_argument(where + " row " + std::to_string(x) +
                                    " does not sum to one");
    }
    if (mdp.r[a].size() != n)
      throw std::invalid_argument(where + " has a misshapen reward vector");
    require_finite(mdp.r[a], where);
  }
}

enum class IterStatus { converged, max_iters, diverged };

inline const char *to_string(IterStatus s) {
  switch (s) {
    case IterStatus::converged: return "converged";
    case IterStatus::max_iters: return "max-iters";
    case IterStatus::diverged: return "diverged";
  }
  return "unknown";
}

/// Per-step history of a fixed-point iteration. For weight-space solvers
/// `deltas` tracks ||w_{t+1} - w_t||_inf and `value_deltas` the same distance
/// after mapping through the basis; exact value iteration fills both with the
/// value-space step size.
struct IterationTrace {
  std::vector<double> deltas;
  std::vector<double> value_deltas;
  std::int64_t iterations = 0;
  IterStatus status = IterStatus::max_iters;
};

/// One application of the Bellman operator: componentwise max over actions of
/// r^a + gamma * P^a v. A gamma-contraction in the max-norm.
inline Vec bellman_apply(const FlatMdp &mdp, const Vec &v) {
  if (v.size() != mdp.states())
    throw std::invalid_argument("bellman_apply: value vector length does not match state count");
  Vec out = mdp.r[0] + mdp.gamma * (mdp.p[0] * v);
  for (size_t a = 1; a < mdp.p.size(); ++a)
    out = out.cwiseMax(Vec(mdp.r[a] + mdp.gamma * (mdp.p[a] * v)));
  return out;
}

struct ExactViResult {
  Vec v;
  IterationTrace trace;
};

/**
 * Exact value iteration from the zero vector. Stops once the step size drops
 * to eps or the iteration budget runs out. On a converged run the returned
 * vector's Bellman residual is at most eps*(1+gamma)/(1-gamma); the
 * contraction argument in fact gives gamma*eps.
 */
inline ExactViResult exact_vi(const FlatMdp &mdp, double eps, std::int64_t max_iters = 100000) {
  if (!(eps > 0.0)) throw std::invalid_argument("exact_vi: eps must be positive");
  ExactViResult res;
  res.v = Vec::Zero(mdp.states());
  for (std::int64_t t = 0; t < max_iters; ++t) {
    Vec next = bellman_apply(mdp, res.v);
    const double delta = max_norm(Vec(next - res.v));
    res.trace.deltas.push_back(delta);
    res.trace.value_deltas.push_back(delta);
    res.v = std::move(next);
    ++res.trace.iterations;
    if (delta <= eps) {
      res.trace.status = IterStatus::converged;
      return res;
    }
  }
  res.trace.status = IterStatus::max_iters;
  return res;
}

using Policy = std::vector<index_t>;

/// Greedy action per state with respect to v; ties go to the lowest index.
inline Policy greedy_policy(const FlatMdp &mdp, const Vec &v) {
  if (v.size() != mdp.states())
    throw std::invalid_argument("greedy_policy: value vector length does not match state count");
  const index_t n = mdp.states();
  Policy pol(static_cast<size_t>(n), 0);
  Vec best = mdp.r[0] + mdp.gamma * (mdp.p[0] * v);
  for (size_t a = 1; a < mdp.p.size(); ++a) {
    const Vec q = mdp.r[a] + mdp.gamma * (mdp.p[a] * v);
    for (index_t x = 0; x < n; ++x)
      if (q(x) > best(x)) {
        best(x) = q(x);
        pol[static_cast<size_t>(x)] = static_cast<index_t>(a);
      }
  }
  return pol;
}

struct AviResult {
  Vec w;
  IterationTrace trace;
};

/**
 * Approximate value iteration in weight space:
 *
 *   w_{t+1} := proj( max_a ( r^a + gamma * P^a H w_t ) )
 *
 * started from w0 (the zero vector when w0 is left empty). Iteration stops as
 * converged when the weight step drops to eps, as diverged when the weights
 * blow past 1e8 in max-norm or stop being finite, and as max-iters otherwise.
 * Whether the iteration contracts is entirely the projector's business; the
 * divergence cutoff exists so that expanding projections terminate in
 * bounded time.
 */
inline AviResult avi_iterate(const FlatMdp &mdp, const Mat &h, const Projector &proj,
                             double eps, std::int64_t max_iters, const Vec &w0 = Vec()) {
  if (!(eps > 0.0)) throw std::invalid_argument("avi_iterate: eps must be positive");
  if (h.rows() != mdp.states())
    throw std::invalid_argument("avi_iterate: basis rows do not match state count");
  const index_t k = h.cols();
  AviResult res;
  if (w0.size() == 0) {
    res.w = Vec::Zero(k);
  } else {
    if (w0.size() != k)
      throw std::invalid_argument("avi_iterate: start weights do not match basis columns");
    res.w = w0;
  }
  for (std::int64_t t = 0; t < max_iters; ++t) {
    const Vec w_next = proj.apply(bellman_apply(mdp, Vec(h * res.w)));
    if (!w_next.allFinite()) {
      res.trace.status = IterStatus::diverged;
      return res;
    }
    const double delta = max_norm(Vec(w_next - res.w));
    res.trace.deltas.push_back(delta);
    res.trace.value_deltas.push_back(max_norm(Vec(h * (w_next - res.w))));
    res.w = w_next;
    ++res.trace.iterations;
    if (max_norm(res.w) > 1e8) {
      res.trace.status = IterStatus::diverged;
      return res;
    }
    if (delta <= eps) {
      res.trace.status = IterStatus::converged;
      return res;
    }
  }
  res.trace.status = IterStatus::max_iters;
  return res;
}

/// Fixed-point error guarantee computed from the optimal value vector:
/// (1/(1-gamma)) * ||H proj(v*) - v*||_inf. For projectors whose composition
/// with H is a max-norm non-expansion this bounds ||H w* - v*||_inf at the
/// converged weights; for other kinds it is reported as-is, without a
/// guarantee attached.
inline double apriori_error_bound(const FlatMdp &mdp, const Mat &h, const Projector &proj,
                                  const Vec &v_star) {
  if (h.rows() != mdp.states() || v_star.size() != mdp.states())
    throw std::invalid_argument("apriori_error_bound: dimensions do not match state count");
  return max_norm(Vec(h * proj.apply(v_star) - v_star)) / (1.0 - mdp.gamma);
}

}  // namespace fvi
