#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvi/matrix.hpp"
#include "fvi/mdp.hpp"

namespace fvi {

/// A full state assignment: one digit per variable.
using Assign = std::vector<index_t>;

struct VarSpace {
  std::vector<index_t> sizes;
  std::vector<std::string> names;  // empty or one per variable

  index_t count() const { return static_cast<index_t>(sizes.size()); }
};

/// Number of full states, or nothing when the product overflows 64 bits.
inline std::optional<std::uint64_t> state_count(const VarSpace &vs) {
  std::uint64_t total = 1;
  for (index_t s : vs.sizes) {
    const auto step = static_cast<std::uint64_t>(s);
    if (step != 0 && total > std::numeric_limits<std::uint64_t>::max() / step)
      return std::nullopt;
    total *= step;
  }
  return total;
}

/*
 * States are indexed in mixed radix with variable 0 as the least significant
 * digit: index = x[0] + x[1]*n0 + x[2]*n0*n1 + ...  Every module and the
 * model file format use this same order, so flattened matrices, sampled state
 * lists and basis rows can be compared entry by entry.
 */
inline std::uint64_t state_index(const VarSpace &vs, const Assign &x) {
  if (static_cast<index_t>(x.size()) != vs.count())
    throw std::invalid_argument("state_index: assignment length does not match variable count");
  std::uint64_t idx = 0, stride = 1;
  for (index_t i = 0; i < vs.count(); ++i) {
    if (x[static_cast<size_t>(i)] < 0 || x[static_cast<size_t>(i)] >= vs.sizes[static_cast<size_t>(i)])
      throw std::invalid_argument("state_index: digit " + std::to_string(i) + " out of range");
    idx += static_cast<std::uint64_t>(x[static_cast<size_t>(i)]) * stride;
    stride *= static_cast<std::uint64_t>(vs.sizes[static_cast<size_t>(i)]);
  }
  return idx;
}

inline Assign state_assign(const VarSpace &vs, std::uint64_t idx) {
  Assign x(static_cast<size_t>(vs.count()));
  for (index_t i = 0; i < vs.count(); ++i) {
    const auto n = static_cast<std::uint64_t>(vs.sizes[static_cast<size_t>(i)]);
    x[static_cast<size_t>(i)] = static_cast<index_t>(idx % n);
    idx /= n;
  }
  if (idx != 0) throw std::invalid_argument("state_assign: index out of range");
  return x;
}

/// Advance a full assignment to the next state in index order; false once the
/// odometer wraps around to all zeros.
inline bool next_assign(const VarSpace &vs, Assign &x) {
  for (index_t i = 0; i < vs.count(); ++i) {
    auto &digit = x[static_cast<size_t>(i)];
    if (++digit < vs.sizes[static_cast<size_t>(i)]) return true;
    digit = 0;
  }
  return false;
}

/// Mixed-radix index of the restriction x[scope] within the scope's own
/// little-endian digit order.
inline index_t scope_index(const VarSpace &vs, const std::vector<index_t> &scope, const Assign &x) {
  index_t idx = 0, stride = 1;
  for (index_t v : scope) {
    idx += x[static_cast<size_t>(v)] * stride;
    stride *= vs.sizes[static_cast<size_t>(v)];
  }
  return idx;
}

inline index_t scope_size(const VarSpace &vs, const std::vector<index_t> &scope) {
  index_t total = 1;
  for (index_t v : scope) total *= vs.sizes[static_cast<size_t>(v)];
  return total;
}

/**
 * A function of a handful of variables, stored as a dense table over the
 * scope's assignments (columns, in scope-local mixed radix) with one row per
 * action — or a single row when the function does not depend on the action.
 * Evaluation at a full state just restricts the state to the scope, which is
 * the trivial extension to the whole space.
 */
struct LocalScopeFunction {
  std::vector<index_t> scope;  // strictly increasing variable indices
  Mat table;                   // (|A| or 1) x scope_size

  double value(const VarSpace &vs, index_t action_row, const Assign &x) const {
    return table(table.rows() == 1 ? 0 : action_row, scope_index(vs, scope, x));
  }
};

/// Conditional distribution of one variable's next value given the current
/// values of its parents, per action: table[a](parent assignment, next value).
struct TransitionFactor {
  index_t var = 0;
  std::vector<index_t> parents;  // strictly increasing
  std::vector<Mat> table;
};

struct FactoredMdp {
  VarSpace vars;
  std::vector<std::string> actions;
  std::vector<TransitionFactor> factors;  // one per variable, ordered by var
  std::vector<LocalScopeFunction> rewards;
  double gamma = 0.95;
  Assign start;
};

struct BasisSet {
  std::vector<LocalScopeFunction> funcs;  // single-row tables
};

/// A factored MDP together with the basis it is meant to be solved on; this
/// pairing is what the model files on disk hold.
struct Model {
  FactoredMdp mdp;
  BasisSet basis;
};

namespace detail {

inline void check_scope(const VarSpace &vs, const std::vector<index_t> &scope,
                        const std::string &where) {
  index_t prev = -1;
  for (index_t v : scope) {
    if (v < 0 || v >= vs.count())
      throw std::invalid_argument(where + " references variable " + std::to_string(v) +
                                  " outside the model");
    if (v <= prev)
      throw std::invalid_argument(where + " has a scope that is not strictly increasing");
    prev = v;
  }
}

inline void check_assign(const VarSpace &vs, const Assign &x, const std::string &where) {
  if (static_cast<index_t>(x.size()) != vs.count())
    throw std::invalid_argument(where + ": assignment length does not match variable count");
  for (index_t i = 0; i < vs.count(); ++i)
    if (x[static_cast<size_t>(i)] < 0 || x[static_cast<size_t>(i)] >= vs.sizes[static_cast<size_t>(i)])
      throw std::invalid_argument(where + ": digit " + std::to_string(i) + " out of range");
}

inline std::string var_label(const VarSpace &vs, index_t v) {
  std::string label = "variable " + std::to_string(v);
  if (!vs.names.empty()) label += " (" + vs.names[static_cast<size_t>(v)] + ")";
  return label;
}

}  // namespace detail

inline void validate_fmdp(const FactoredMdp &m) {
  const VarSpace &vs = m.vars;
  if (vs.count() < 1) throw std::invalid_argument("factored mdp: needs at least one variable");
  for (index_t i = 0; i < vs.count(); ++i)
    if (vs.sizes[static_cast<size_t>(i)] < 2)
      throw std::invalid_argument("factored mdp: " + detail::var_label(vs, i) +
                                  " needs a domain of at least two values");
  if (!vs.names.empty() && static_cast<index_t>(vs.names.size()) != vs.count())
    throw std::invalid_argument("factored mdp: variable name list length mismatch");
  if (m.actions.empty()) throw std::invalid_argument("factored mdp: needs at least one action");
  if (!(m.gamma >= 0.0 && m.gamma < 1.0))
    throw std::invalid_argument("factored mdp: discount must lie in [0, 1)");
  const auto n_actions = static_cast<index_t>(m.actions.size());

  if (static_cast<index_t>(m.factors.size()) != vs.count())
    throw std::invalid_argument("factored mdp: expected exactly one transition factor per variable");
  for (index_t i = 0; i < vs.count(); ++i) {
    const TransitionFactor &f = m.factors[static_cast<size_t>(i)];
    const std::string where = "factored mdp: factor for " + detail::var_label(vs, i);
    if (f.var != i)
      throw std::invalid_argument("factored mdp: factors must be ordered by variable; position " +
                                  std::to_string(i) + " holds variable " + std::to_string(f.var));
    detail::check_scope(vs, f.parents, where);
    if (static_cast<index_t>(f.table.size()) != n_actions)
      throw std::invalid_argument(where + " needs one table per action");
    const index_t rows = scope_size(vs, f.parents);
    const index_t cols = vs.sizes[static_cast<size_t>(i)];
    for (index_t a = 0; a < n_actions; ++a) {
      const Mat &t = f.table[static_cast<size_t>(a)];
      if (t.rows() != rows || t.cols() != cols)
        throw std::invalid_argument(where + ", action " + std::to_string(a) +
                                    " has a misshapen table");
      require_finite(t, where);
      for (index_t row = 0; row < rows; ++row) {
        if (t.row(row).minCoeff() < 0.0)
          throw std::invalid_argument(where + ", action " + std::to_string(a) + ", row " +
                                      std::to_string(row) + " has a negative probability");
        if (std::abs(t.row(row).sum() - 1.0) > 1e-9)
          throw std::invalid_argument(where + ", action " + std::to_string(a) + ", row " +
                                      std::to_string(row) + " does not sum to one");
      }
    }
  }

  for (size_t j = 0; j < m.rewards.size(); ++j) {
    const LocalScopeFunction &r = m.rewards[j];
    const std::string where = "factored mdp: reward " + std::to_string(j);
    detail::check_scope(vs, r.scope, where);
    if (r.table.rows() != n_actions && r.table.rows() != 1)
      throw std::invalid_argument(where + " needs one row per action (or a single shared row)");
    if (r.table.cols() != scope_size(vs, r.scope))
      throw std::invalid_argument(where + " table width does not match its scope");
    require_finite(r.table, where);
  }

  detail::check_assign(vs, m.start, "factored mdp: start state");
}

inline void validate_basis(const BasisSet &basis, const VarSpace &vs) {
  if (basis.funcs.empty()) throw std::invalid_argument("basis: needs at least one function");
  for (size_t k = 0; k < basis.funcs.size(); ++k) {
    const LocalScopeFunction &h = basis.funcs[k];
    const std::string where = "basis function " + std::to_string(k);
    detail::check_scope(vs, h.scope, where);
    if (h.table.rows() != 1)
      throw std::invalid_argument(where + " must not depend on the action");
    if (h.table.cols() != scope_size(vs, h.scope))
      throw std::invalid_argument(where + " table width does not match its scope");
    require_finite(h.table, where);
  }
}

inline void validate_model(const Model &model) {
  validate_fmdp(model.mdp);
  validate_basis(model.basis, model.mdp.vars);
}

/// P(y | x, a) as the product of per-variable factor lookups, multiplied in
/// ascending variable order (the flattening below builds its rows with the
/// same order, so the two agree bit for bit).
inline double eval_transition(const FactoredMdp &m, const Assign &x, index_t a, const Assign &y) {
  detail::check_assign(m.vars, x, "eval_transition");
  detail::check_assign(m.vars, y, "eval_transition");
  if (a < 0 || a >= static_cast<index_t>(m.actions.size()))
    throw std::invalid_argument("eval_transition: action out of range");
  double p = 1.0;
  for (const TransitionFactor &f : m.factors) {
    const index_t row = scope_index(m.vars, f.parents, x);
    p *= f.table[static_cast<size_t>(a)](row, y[static_cast<size_t>(f.var)]);
  }
  return p;
}

inline double eval_reward(const FactoredMdp &m, const Assign &x, index_t a) {
  detail::check_assign(m.vars, x, "eval_reward");
  if (a < 0 || a >= static_cast<index_t>(m.actions.size()))
    throw std::invalid_argument("eval_reward: action out of range");
  double sum = 0.0;
  for (const LocalScopeFunction &r : m.rewards) sum += r.value(m.vars, a, x);
  return sum;
}

inline constexpr std::uint64_t default_flatten_cap = std::uint64_t{1} << 16;

/**
 * Materialize the factored model as an explicit FlatMdp, enumerating states
 * in canonical index order. This is the desk-scale oracle the approximate
 * machinery is tested against; it refuses state spaces above the cap since
 * the output takes |A| * N^2 doubles.
 */
inline FlatMdp flatten(const FactoredMdp &m, std::uint64_t cap = default_flatten_cap) {
  validate_fmdp(m);
  const auto total = state_count(m.vars);
  if (!total || *total > cap)
    throw std::invalid_argument("flatten: state space exceeds the cap of " + std::to_string(cap) +
                                " states; raise the cap to force the expansion");
  const auto n = static_cast<index_t>(*total);
  const auto n_actions = static_cast<index_t>(m.actions.size());
  const index_t n_vars = m.vars.count();

  FlatMdp flat;
  flat.gamma = m.gamma;
  flat.start = static_cast<index_t>(state_index(m.vars, m.start));
  std::vector<double> acc, grown;
  for (index_t a = 0; a < n_actions; ++a) {
    Mat p(n, n);
    Vec r(n);
    Assign x(static_cast<size_t>(n_vars), 0);
    index_t row = 0;
    do {
      acc.assign(1, 1.0);
      for (index_t i = 0; i < n_vars; ++i) {
        const TransitionFactor &f = m.factors[static_cast<size_t>(i)];
        const index_t parent_row = scope_index(m.vars, f.parents, x);
        const Mat &t = f.table[static_cast<size_t>(a)];
        const index_t width = t.cols();
        grown.resize(acc.size() * static_cast<size_t>(width));
        for (index_t v = 0; v < width; ++v) {
          const double pv = t(parent_row, v);
          for (size_t j = 0; j < acc.size(); ++j)
            grown[static_cast<size_t>(v) * acc.size() + j] = acc[j] * pv;
        }
        acc.swap(grown);
      }
      for (index_t y = 0; y < n; ++y) p(row, y) = acc[static_cast<size_t>(y)];
      double reward = 0.0;
      for (const LocalScopeFunction &rj : m.rewards) reward += rj.value(m.vars, a, x);
      r(row) = reward;
      ++row;
    } while (next_assign(m.vars, x));
    flat.p.push_back(std::move(p));
    flat.r.push_back(std::move(r));
  }
  return flat;
}

/// Basis matrix over an explicit list of states, one row per listed state.
inline Mat flatten_basis(const BasisSet &basis, const VarSpace &vs,
                         const std::vector<Assign> &states) {
  validate_basis(basis, vs);
  const auto k = static_cast<index_t>(basis.funcs.size());
  Mat h(static_cast<index_t>(states.size()), k);
  for (size_t s = 0; s < states.size(); ++s) {
    detail::check_assign(vs, states[s], "flatten_basis");
    for (index_t j = 0; j < k; ++j)
      h(static_cast<index_t>(s), j) = basis.funcs[static_cast<size_t>(j)].value(vs, 0, states[s]);
  }
  return h;
}

/// Basis matrix over the full state space in canonical order.
inline Mat flatten_basis(const BasisSet &basis, const VarSpace &vs,
                         std::uint64_t cap = default_flatten_cap) {
  validate_basis(basis, vs);
  const auto total = state_count(vs);
  if (!total || *total > cap)
    throw std::invalid_argument("flatten_basis: state space exceeds the cap of " +
                                std::to_string(cap) + " states");
  const auto k = static_cast<index_t>(basis.funcs.size());
  Mat h(static_cast<index_t>(*total), k);
  Assign x(static_cast<size_t>(vs.count()), 0);
  index_t row = 0;
  do {
    for (index_t j = 0; j < k; ++j)
      h(row, j) = basis.funcs[static_cast<size_t>(j)].value(vs, 0, x);
    ++row;
  } while (next_assign(vs, x));
  return h;
}

struct UcReport {
  bool is_uc = false;
  double row_sum = 0.0;
};

/// Uniform covering check: nonnegative entries and identical row sums. The
/// reported sum is the first row's, meaningful when is_uc holds.
inline UcReport check_uc(const Mat &h) {
  UcReport report;
  if (h.rows() == 0 || h.cols() == 0) return report;
  report.row_sum = h.row(0).sum();
  if (h.minCoeff() < 0.0) return report;
  for (index_t i = 0; i < h.rows(); ++i)
    if (std::abs(h.row(i).sum() - report.row_sum) > 1e-9) return report;
  report.is_uc = true;
  return report;
}

/**
 * Observation-level companion process for a stochastic basis H: each basis
 * function becomes a state, entered with probability proportional to its
 * column ("uniform prior over the concrete states"), and transition mass is
 * aggregated through H on both ends:
 *
 *   P'(s'|s,a) = sum_{x,y} Pr(x|s) P(y|x,a) H(y,s')     R'(s,a) = E[r^a | s]
 *
 * Exact value iteration on the result mirrors basis-weight iteration on the
 * original MDP under the column-normalized transpose projection.
 */
/// The column-normalized transpose of a stochastic basis: row s is column s
/// of `h` scaled to sum to one. This is the weight-space projection whose
/// iteration the observation process reproduces.
inline Mat aux_projection(const Mat &h) {
  const index_t k = h.cols();
  Mat g(k, h.rows());
  for (index_t s = 0; s < k; ++s) {
    const double colsum = h.col(s).sum();
    if (colsum <= 0.0)
      throw std::invalid_argument("build_aux_mdp: basis column " + std::to_string(s) +
                                  " is identically zero");
    g.row(s) = h.col(s).transpose() / colsum;
  }
  return g;
}

inline FlatMdp build_aux_mdp(const FlatMdp &flat, const Mat &h) {
  validate(flat);
  if (h.rows() != flat.states())
    throw std::invalid_argument("build_aux_mdp: basis rows do not match state count");
  const UcReport uc = check_uc(h);
  if (!uc.is_uc || std::abs(uc.row_sum - 1.0) > 1e-9)
    throw std::invalid_argument("build_aux_mdp: basis must be nonnegative with unit row sums");
  const Mat g = aux_projection(h);
  FlatMdp aux;
  aux.gamma = flat.gamma;
  aux.start = 0;
  for (size_t a = 0; a < flat.p.size(); ++a) {
    aux.p.push_back(g * flat.p[a] * h);
    aux.r.push_back(g * flat.r[a]);
  }
  return aux;
}

enum class Topology { ring, star };

inline Topology parse_topology(const std::string &name) {
  if (name == "ring") return Topology::ring;
  if (name == "star") return Topology::star;
  throw std::invalid_argument("unknown topology '" + name + "' (expected ring or star)");
}

/**
 * Network-administration benchmark: m machines, each working (1) or faulty
 * (0). A working machine stays up with probability 0.95, degraded by a
 * further factor 0.9 per faulty neighbor; a faulty machine stays down until
 * rebooted. Action i reboots machine i (forcing it to working); the last
 * action is a no-op. Reward is the number of working machines; one indicator
 * basis function per machine plus a constant. The ring couples each machine
 * to both adjacent ones; the star is directed, hub first: the hub evolves on
 * its own and every leaf watches the hub, which keeps all parent scopes at
 * two variables.
 *
 * The construction is fully determined by (m, topology); the seed parameter
 * is accepted for interface uniformity and recorded nowhere.
 */
inline Model gen_sysadmin(index_t m, Topology topology, std::uint64_t /*seed*/ = 0) {
  if (m < 2) throw std::invalid_argument("gen_sysadmin: needs at least two machines");
  Model model;
  FactoredMdp &mdp = model.mdp;
  mdp.vars.sizes.assign(static_cast<size_t>(m), 2);
  for (index_t i = 0; i < m; ++i) mdp.vars.names.push_back("m" + std::to_string(i));
  for (index_t i = 0; i < m; ++i) mdp.actions.push_back("reboot" + std::to_string(i));
  mdp.actions.push_back("noop");
  const auto n_actions = static_cast<index_t>(mdp.actions.size());
  mdp.gamma = 0.95;
  mdp.start.assign(static_cast<size_t>(m), 1);

  for (index_t i = 0; i < m; ++i) {
    TransitionFactor f;
    f.var = i;
    if (topology == Topology::ring) {
      f.parents = {(i + m - 1) % m, i, (i + 1) % m};
      std::sort(f.parents.begin(), f.parents.end());
      f.parents.erase(std::unique(f.parents.begin(), f.parents.end()), f.parents.end());
    } else {
      f.parents = i == 0 ? std::vector<index_t>{0} : std::vector<index_t>{0, i};
    }
    const index_t rows = scope_size(mdp.vars, f.parents);
    const auto self_pos = static_cast<size_t>(
        std::find(f.parents.begin(), f.parents.end(), i) - f.parents.begin());
    for (index_t a = 0; a < n_actions; ++a) {
      Mat t(rows, 2);
      for (index_t row = 0; row < rows; ++row) {
        if (a == i) {
          t(row, 0) = 0.0;
          t(row, 1) = 1.0;
          continue;
        }
        index_t rest = row;
        index_t self_digit = 0;
        index_t faulty_neighbors = 0;
        for (size_t pos = 0; pos < f.parents.size(); ++pos) {
          const index_t digit = rest % 2;
          rest /= 2;
          if (pos == self_pos)
            self_digit = digit;
          else if (digit == 0)
            ++faulty_neighbors;
        }
        if (self_digit == 0) {
          t(row, 0) = 1.0;
          t(row, 1) = 0.0;
        } else {
          double up = 0.95;
          for (index_t fcount = 0; fcount < faulty_neighbors; ++fcount) up *= 0.9;
          t(row, 0) = 1.0 - up;
          t(row, 1) = up;
        }
      }
      f.table.push_back(std::move(t));
    }
    mdp.factors.push_back(std::move(f));
  }

  for (index_t i = 0; i < m; ++i) {
    LocalScopeFunction r;
    r.scope = {i};
    r.table = Mat(1, 2);
    r.table << 0.0, 1.0;
    mdp.rewards.push_back(std::move(r));
  }

  LocalScopeFunction constant;
  constant.table = Mat::Ones(1, 1);
  model.basis.funcs.push_back(std::move(constant));
  for (index_t i = 0; i < m; ++i) {
    LocalScopeFunction ind;
    ind.scope = {i};
    ind.table = Mat(1, 2);
    ind.table << 0.0, 1.0;
    model.basis.funcs.push_back(std::move(ind));
  }
  return model;
}

}  // namespace fvi
