#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "fvi/factored.hpp"
#include "fvi/matrix.hpp"
#include "fvi/mdp.hpp"
#include "fvi/projection.hpp"
#include "fvi/rng.hpp"

namespace fvi {

enum class SamplingMode { iid, distinct };

inline const char *to_string(SamplingMode mode) {
  return mode == SamplingMode::iid ? "iid" : "distinct";
}

inline SamplingMode parse_sampling_mode(const std::string &name) {
  if (name == "iid") return SamplingMode::iid;
  if (name == "distinct") return SamplingMode::distinct;
  throw std::invalid_argument("unknown sampling mode '" + name + "' (expected iid or distinct)");
}

namespace detail {

inline Assign draw_assign(std::mt19937_64 &rng, const VarSpace &vs) {
  Assign x(static_cast<size_t>(vs.count()));
  for (index_t i = 0; i < vs.count(); ++i)
    x[static_cast<size_t>(i)] = static_cast<index_t>(
        bounded_draw(rng, static_cast<std::uint64_t>(vs.sizes[static_cast<size_t>(i)])));
  return x;
}

}  // namespace detail

/**
 * Uniformly sampled state list. iid mode draws each state independently
 * (repeats allowed), digit by digit, so it works no matter how large the
 * product space is. distinct mode draws a uniform subset without repeats:
 * a partial Fisher-Yates shuffle when the space is small enough to index,
 * rejection sampling otherwise. Both are fully determined by the seed.
 */
inline std::vector<Assign> sample_states(const VarSpace &vs, std::uint64_t n1, std::uint64_t seed,
                                         SamplingMode mode) {
  if (vs.count() < 1) throw std::invalid_argument("sample_states: empty variable space");
  if (n1 < 1) throw std::invalid_argument("sample_states: need at least one sample");
  std::mt19937_64 rng(seed);
  std::vector<Assign> out;
  out.reserve(static_cast<size_t>(n1));

  if (mode == SamplingMode::iid) {
    for (std::uint64_t s = 0; s < n1; ++s) out.push_back(detail::draw_assign(rng, vs));
    return out;
  }

  const auto total = state_count(vs);
  if (total && n1 > *total)
    throw std::invalid_argument("sample_states: distinct mode cannot draw " + std::to_string(n1) +
                                " states from a space of " + std::to_string(*total));
  if (total && *total <= (std::uint64_t{1} << 20)) {
    std::vector<std::uint64_t> order(static_cast<size_t>(*total));
    for (std::uint64_t i = 0; i < *total; ++i) order[static_cast<size_t>(i)] = i;
    for (std::uint64_t i = 0; i < n1; ++i) {
      const std::uint64_t j = i + detail::bounded_draw(rng, *total - i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
      out.push_back(state_assign(vs, order[static_cast<size_t>(i)]));
    }
    return out;
  }
  if (total) {
    std::unordered_set<std::uint64_t> seen;
    while (out.size() < n1) {
      const std::uint64_t idx = detail::bounded_draw(rng, *total);
      if (seen.insert(idx).second) out.push_back(state_assign(vs, idx));
    }
    return out;
  }
  // The space does not even fit a 64-bit count; key the dedupe on digits.
  std::unordered_set<std::string> seen;
  while (out.size() < n1) {
    Assign x = detail::draw_assign(rng, vs);
    std::string key;
    for (index_t d : x) {
      key += std::to_string(d);
      key += ',';
    }
    if (seen.insert(std::move(key)).second) out.push_back(std::move(x));
  }
  return out;
}

/**
 * One row of the value backprojection matrix: for each basis function h_k,
 * the expected value of h_k at the successor state,
 *
 *   B^a(x, k) = sum over assignments u of scope(h_k) of
 *               h_k(u) * prod_{i in scope} P_i(u_i | x[parents_i], a).
 *
 * The sum runs over the basis scope's local assignments only — the factors
 * of every other variable marginalize to one — so the cost is governed by
 * the scope width, never by the number of full states.
 */
inline Vec build_backprojection_row(const FactoredMdp &m, const BasisSet &basis, const Assign &x,
                                    index_t a) {
  detail::check_assign(m.vars, x, "build_backprojection_row");
  if (a < 0 || a >= static_cast<index_t>(m.actions.size()))
    throw std::invalid_argument("build_backprojection_row: action out of range");
  const auto k = static_cast<index_t>(basis.funcs.size());
  Vec row(k);
  for (index_t j = 0; j < k; ++j) {
    const LocalScopeFunction &hk = basis.funcs[static_cast<size_t>(j)];
    const index_t width = scope_size(m.vars, hk.scope);
    double sum = 0.0;
    for (index_t col = 0; col < width; ++col) {
      double p = 1.0;
      index_t rest = col;
      for (index_t v : hk.scope) {
        const auto n_v = m.vars.sizes[static_cast<size_t>(v)];
        const index_t digit = rest % n_v;
        rest /= n_v;
        const TransitionFactor &f = m.factors[static_cast<size_t>(v)];
        p *= f.table[static_cast<size_t>(a)](scope_index(m.vars, f.parents, x), digit);
      }
      sum += p * hk.table(0, col);
    }
    row(j) = sum;
  }
  return row;
}

/// The fixed-point system restricted to a list of sampled states: basis rows,
/// per-action backprojection rows and rewards, plus the projection fitted to
/// the sampled basis matrix.
struct SampledSystem {
  std::vector<Assign> states;
  Mat h;              // |states| x K
  std::vector<Mat> b;  // per action, |states| x K
  std::vector<Vec> r;  // per action
  Projector proj;
  bool h_rank_deficient = false;
};

namespace detail {

struct SampledTables {
  Mat h;
  std::vector<Mat> b;
  std::vector<Vec> r;
};

inline SampledTables build_tables(const FactoredMdp &m, const BasisSet &basis,
                                  const std::vector<Assign> &states) {
  SampledTables tables;
  tables.h = flatten_basis(basis, m.vars, states);
  const auto n1 = static_cast<index_t>(states.size());
  const auto k = static_cast<index_t>(basis.funcs.size());
  const auto n_actions = static_cast<index_t>(m.actions.size());
  for (index_t a = 0; a < n_actions; ++a) {
    Mat b(n1, k);
    Vec r(n1);
    for (index_t s = 0; s < n1; ++s) {
      b.row(s) = build_backprojection_row(m, basis, states[static_cast<size_t>(s)], a).transpose();
      r(s) = eval_reward(m, states[static_cast<size_t>(s)], a);
    }
    tables.b.push_back(std::move(b));
    tables.r.push_back(std::move(r));
  }
  return tables;
}

}  // namespace detail

inline SampledSystem assemble_sampled(const FactoredMdp &m, const BasisSet &basis,
                                      std::vector<Assign> states, ProjKind kind) {
  validate_fmdp(m);
  validate_basis(basis, m.vars);
  if (states.empty()) throw std::invalid_argument("assemble_sampled: empty state list");
  detail::SampledTables tables = detail::build_tables(m, basis, states);
  SampledSystem sys;
  sys.states = std::move(states);
  sys.h = std::move(tables.h);
  sys.b = std::move(tables.b);
  sys.r = std::move(tables.r);
  sys.proj = make_projector(kind, sys.h);
  const Eigen::JacobiSVD<Mat> svd(sys.h);
  const auto &sv = svd.singularValues();
  sys.h_rank_deficient = sys.h.rows() < sys.h.cols() || sv(0) == 0.0 ||
                         sv(sv.size() - 1) <= 1e-10 * sv(0);
  return sys;
}

/// max over the listed states of | max_a(r^a + gamma B^a w) - H w |: how far
/// the weight vector is from solving the sampled fixed-point equations.
inline double bellman_residual(const FactoredMdp &m, const BasisSet &basis, const Vec &w,
                               const std::vector<Assign> &states) {
  validate_fmdp(m);
  validate_basis(basis, m.vars);
  if (states.empty()) throw std::invalid_argument("bellman_residual: empty state list");
  if (w.size() != static_cast<index_t>(basis.funcs.size()))
    throw std::invalid_argument("bellman_residual: weight length does not match basis size");
  const detail::SampledTables tables = detail::build_tables(m, basis, states);
  Vec best = tables.r[0] + m.gamma * (tables.b[0] * w);
  for (size_t a = 1; a < tables.b.size(); ++a)
    best = best.cwiseMax(Vec(tables.r[a] + m.gamma * (tables.b[a] * w)));
  return max_norm(Vec(best - tables.h * w));
}

struct FviConfig {
  std::optional<std::uint64_t> samples;  // empty: run on every state
  SamplingMode mode = SamplingMode::iid;
  std::uint64_t seed = 0;
  ProjKind projection = ProjKind::npinv;
  double epsilon = 1e-6;
  std::int64_t max_iters = 10000;
  std::uint64_t flatten_cap = default_flatten_cap;
};

struct FviReport {
  Vec w;
  IterationTrace trace;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> apriori_bound;
  double wall_time_s = 0.0;
  std::uint64_t sampled_states = 0;
  FviConfig config;
  std::vector<std::string> warnings;
};

/// Full-space exactness is only cross-checked against the flat oracle when
/// the state space stays this small; beyond it the quadratic-size flattening
/// is skipped and the report simply carries no bound.
inline constexpr std::uint64_t apriori_oracle_cap = 1024;

/**
 * Factored value iteration: restrict the fixed-point equations to a uniform
 * state sample, fit the projection to the sampled basis matrix, and iterate
 *
 *   w_{t+1} := proj( max_a ( r^a + gamma B^a w_t ) )
 *
 * from w_0 = 0 until the weight step drops to epsilon. With samples left
 * unset the equations are built over every state in canonical order, which
 * reproduces basis-space value iteration on the flattened model exactly; in
 * that mode (and while the space is small enough to flatten) the report also
 * carries the fixed-point error bound computed from the exact solution.
 */
inline FviReport fvi_solve(const FactoredMdp &m, const BasisSet &basis, const FviConfig &cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_fmdp(m);
  validate_basis(basis, m.vars);
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("fvi_solve: epsilon must be positive");
  if (cfg.max_iters < 1) throw std::invalid_argument("fvi_solve: needs a positive iteration budget");
  const auto k = static_cast<std::uint64_t>(basis.funcs.size());

  std::vector<Assign> states;
  if (cfg.samples) {
    if (*cfg.samples < k)
      throw std::invalid_argument("fvi_solve: sample count must reach the basis size");
    states = sample_states(m.vars, *cfg.samples, cfg.seed, cfg.mode);
  } else {
    const auto total = state_count(m.vars);
    if (!total || *total > cfg.flatten_cap)
      throw std::invalid_argument(
          "fvi_solve: full-state mode exceeds the cap of " + std::to_string(cfg.flatten_cap) +
          " states; pass a sample count (or raise the cap) for spaces this large");
    if (*total < k)
      throw std::invalid_argument("fvi_solve: state space smaller than the basis size");
    states.reserve(static_cast<size_t>(*total));
    Assign x(static_cast<size_t>(m.vars.count()), 0);
    do {
      states.push_back(x);
    } while (next_assign(m.vars, x));
  }

  SampledSystem sys = assemble_sampled(m, basis, std::move(states), cfg.projection);

  FviReport report;
  report.config = cfg;
  report.sampled_states = static_cast<std::uint64_t>(sys.states.size());
  if (sys.h_rank_deficient)
    report.warnings.push_back(
        "sampled basis matrix is rank-deficient; the projection falls back to the pseudoinverse "
        "behaviour");

  report.w = Vec::Zero(static_cast<index_t>(k));
  for (std::int64_t t = 0; t < cfg.max_iters; ++t) {
    Vec best = sys.r[0] + m.gamma * (sys.b[0] * report.w);
    for (size_t a = 1; a < sys.b.size(); ++a)
      best = best.cwiseMax(Vec(sys.r[a] + m.gamma * (sys.b[a] * report.w)));
    const Vec w_next = sys.proj.apply(best);
    if (!w_next.allFinite()) {
      report.trace.status = IterStatus::diverged;
      break;
    }
    const double delta = max_norm(Vec(w_next - report.w));
    report.trace.deltas.push_back(delta);
    report.trace.value_deltas.push_back(max_norm(Vec(sys.h * (w_next - report.w))));
    report.w = w_next;
    ++report.trace.iterations;
    if (max_norm(report.w) > 1e8) {
      report.trace.status = IterStatus::diverged;
      break;
    }
    if (delta <= cfg.epsilon) {
      report.trace.status = IterStatus::converged;
      break;
    }
  }

  if (report.w.allFinite()) {
    Vec best = sys.r[0] + m.gamma * (sys.b[0] * report.w);
    for (size_t a = 1; a < sys.b.size(); ++a)
      best = best.cwiseMax(Vec(sys.r[a] + m.gamma * (sys.b[a] * report.w)));
    report.residual = max_norm(Vec(best - sys.h * report.w));
  }

  if (!cfg.samples) {
    const auto total = state_count(m.vars);
    if (total && *total <= apriori_oracle_cap) {
      const FlatMdp flat = flatten(m, cfg.flatten_cap);
      const ExactViResult exact = exact_vi(flat, 1e-10);
      report.apriori_bound = apriori_error_bound(flat, sys.h, sys.proj, exact.v);
    }
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/**
 * Sample size that makes a uniformly sampled m x k matrix product accurate
 * to eps (relative, max-norm sense) with probability 1 - delta:
 * ceil((2 m^2 / eps^2) * ln(2 k m / delta)), the Hoeffding count.
 */
inline std::uint64_t plan_sample_size(std::uint64_t m, std::uint64_t k, double eps, double delta) {
  if (m < 1 || k < 1) throw std::invalid_argument("plan_sample_size: m and k must be positive");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("plan_sample_size: eps must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("plan_sample_size: delta must lie in (0, 1)");
  const double md = static_cast<double>(m), kd = static_cast<double>(k);
  const double bound = std::ceil((2.0 * md * md / (eps * eps)) * std::log(2.0 * kd * md / delta));
  if (!(bound < 9.0e18))
    throw std::range_error("plan_sample_size: bound exceeds representable counts");
  return static_cast<std::uint64_t>(bound);
}

}  // namespace fvi
