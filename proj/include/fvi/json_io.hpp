#pragma once

// Model files and run reports share one JSON dialect: objects with sorted
// keys, two-space indentation, one value per line, numbers at 17 significant
// digits, and non-finite values spelled as the strings "NaN", "Infinity" and
// "-Infinity". The formatting is part of the contract — rerunning a seeded
// command must produce a byte-identical report, so files diff cleanly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fvi/factored.hpp"
#include "fvi/fvi_solver.hpp"
#include "fvi/matrix.hpp"
#include "fvi/mdp.hpp"
#include "fvi/projection.hpp"
#include "fvi/sketch.hpp"
#include "fvi/version.hpp"

namespace fvi {

using json = nlohmann::json;

namespace detail {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "\"NaN\"";
  if (std::isinf(x)) return x > 0 ? "\"Infinity\"" : "\"-Infinity\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_canonical(std::string &out, const json &j, int depth) {
  const std::string pad(static_cast<size_t>(depth) * 2, ' ');
  const std::string inner(static_cast<size_t>(depth + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto &item : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        out += json(item.key()).dump();
        out += ": ";
        write_canonical(out, item.value(), depth + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        write_canonical(out, j[i], depth + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

inline std::string canonical_json(const json &j) {
  std::string out;
  detail::write_canonical(out, j, 0);
  out += '\n';
  return out;
}

inline void save_json(const json &j, const std::string &path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
  file << canonical_json(j);
  if (!file) throw std::runtime_error("failed while writing '" + path + "'");
}

inline json load_json(const std::string &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(file);
  } catch (const json::parse_error &err) {
    throw std::runtime_error("'" + path + "' is not valid JSON: " + err.what());
  }
  return doc;
}

inline json vec_json(const Vec &v) {
  json arr = json::array();
  for (index_t i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline json trace_json(const IterationTrace &trace) {
  json deltas = json::array();
  for (double d : trace.deltas) deltas.push_back(d);
  json value_deltas = json::array();
  for (double d : trace.value_deltas) value_deltas.push_back(d);
  return json{{"deltas", std::move(deltas)},
              {"value_deltas", std::move(value_deltas)},
              {"iterations", trace.iterations},
              {"status", to_string(trace.status)}};
}

inline json config_json(const FviConfig &config) {
  json out{{"sampling", to_string(config.mode)},
           {"seed", config.seed},
           {"projection", to_string(config.projection)},
           {"epsilon", config.epsilon},
           {"max_iters", config.max_iters},
           {"flatten_cap", config.flatten_cap}};
  if (config.samples)
    out["samples"] = *config.samples;
  else
    out["samples"] = "all";
  return out;
}

inline json report_json(const FviReport &report) {
  json warnings = json::array();
  for (const std::string &w : report.warnings) warnings.push_back(w);
  json out{{"status", to_string(report.trace.status)},
           {"weights", vec_json(report.w)},
           {"trace", trace_json(report.trace)},
           {"residual", report.residual},
           {"sampled_states", report.sampled_states},
           {"wall_time_s", report.wall_time_s},
           {"config", config_json(report.config)},
           {"warnings", std::move(warnings)},
           {"library_version", library_version}};
  out["apriori_bound"] = report.apriori_bound ? json(*report.apriori_bound) : json();
  return out;
}

inline json report_json(const SketchReport &report) {
  return json{{"trials", report.trials},
              {"sample_size", report.sample_size},
              {"epsilon", report.epsilon},
              {"delta", report.delta},
              {"max_error", report.max_error},
              {"threshold", report.threshold},
              {"violations", report.violations},
              {"violation_rate", report.violation_rate},
              {"library_version", library_version}};
}

inline json report_json(const NonExpansionReport &report) {
  json out{{"trials", report.trials},
           {"violations", report.violations},
           {"max_ratio", report.max_ratio},
           {"max_growth", report.max_growth},
           {"library_version", library_version}};
  out["op_norm"] = report.op_norm ? json(*report.op_norm) : json();
  return out;
}

namespace detail {

inline const json &member(const json &obj, const char *key, const std::string &path) {
  if (!obj.is_object()) throw std::runtime_error("model: " + path + " must be an object");
  const auto it = obj.find(key);
  if (it == obj.end())
    throw std::runtime_error("model: " + path + " is missing the \"" + key + "\" key");
  return *it;
}

inline double number_at(const json &value, const std::string &path) {
  if (!value.is_number()) throw std::runtime_error("model: " + path + " must be a number");
  return value.get<double>();
}

inline index_t integer_at(const json &value, const std::string &path) {
  if (!value.is_number_integer())
    throw std::runtime_error("model: " + path + " must be an integer");
  return value.get<index_t>();
}

inline std::string string_at(const json &value, const std::string &path) {
  if (!value.is_string() || value.get<std::string>().empty())
    throw std::runtime_error("model: " + path + " must be a non-empty string");
  return value.get<std::string>();
}

inline const json &array_at(const json &value, const std::string &path) {
  if (!value.is_array()) throw std::runtime_error("model: " + path + " must be an array");
  return value;
}

/// Variable indices for a scope exactly as listed in the file. Repeats are
/// rejected; order is preserved so the caller can undo it.
inline std::string var_name(const VarSpace &vs, index_t v) {
  return vs.names.empty() ? "v" + std::to_string(v) : vs.names[static_cast<size_t>(v)];
}

inline std::vector<index_t> listed_scope(const json &names,
                                         const std::map<std::string, index_t> &by_name,
                                         const std::string &path) {
  const json &arr = array_at(names, path);
  std::vector<index_t> scope;
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string name = string_at(arr[i], path + "[" + std::to_string(i) + "]");
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("model: " + path + "[" + std::to_string(i) +
                               "] names unknown variable \"" + name + "\"");
    if (std::find(scope.begin(), scope.end(), it->second) != scope.end())
      throw std::runtime_error("model: " + path + "[" + std::to_string(i) +
                               "] repeats variable \"" + name + "\"");
    scope.push_back(it->second);
  }
  return scope;
}

/// Maps each assignment column of a table laid out over `listed` (first
/// listed variable least significant) to its column once the scope is sorted
/// by variable index. Tables are stored sorted internally, so files may list
/// a scope in any order as long as the table matches the listed order.
inline std::vector<index_t> assignment_permutation(const VarSpace &vs,
                                                   const std::vector<index_t> &listed) {
  std::vector<index_t> sorted = listed;
  std::sort(sorted.begin(), sorted.end());
  const index_t width = scope_size(vs, listed);
  std::vector<index_t> perm(static_cast<size_t>(width));
  Assign x(vs.sizes.size(), 0);
  for (index_t c = 0; c < width; ++c) {
    index_t rest = c;
    for (index_t v : listed) {
      const index_t size = vs.sizes[static_cast<size_t>(v)];
      x[static_cast<size_t>(v)] = rest % size;
      rest /= size;
    }
    perm[static_cast<size_t>(c)] = scope_index(vs, sorted, x);
  }
  return perm;
}

inline void sort_scope(std::vector<index_t> &scope) { std::sort(scope.begin(), scope.end()); }

}  // namespace detail

/**
 * Builds a validated model from a parsed document. Error messages name the
 * offending element by its JSON path, e.g. "factors[1].table[0][2]".
 *
 * Scopes and parent lists may appear in any order in the file; tables are
 * read in the listed order (first listed variable least significant) and
 * stored over the index-sorted scope, so differently ordered files of the
 * same model load to identical in-memory tables.
 */
inline Model model_from_json(const json &doc) {
  if (!doc.is_object()) throw std::runtime_error("model: the document must be a JSON object");

  Model out;
  FactoredMdp &mdp = out.mdp;

  const json &variables = detail::array_at(detail::member(doc, "variables", "document"),
                                           "variables");
  if (variables.empty()) throw std::runtime_error("model: variables must not be empty");
  std::map<std::string, index_t> by_name;
  for (size_t i = 0; i < variables.size(); ++i) {
    const std::string path = "variables[" + std::to_string(i) + "]";
    const std::string name = detail::string_at(detail::member(variables[i], "name", path),
                                               path + ".name");
    const index_t size = detail::integer_at(detail::member(variables[i], "size", path),
                                            path + ".size");
    if (size < 1) throw std::runtime_error("model: " + path + ".size must be at least 1");
    if (!by_name.emplace(name, static_cast<index_t>(i)).second)
      throw std::runtime_error("model: " + path + " repeats the variable name \"" + name + "\"");
    mdp.vars.sizes.push_back(size);
    mdp.vars.names.push_back(name);
  }
  const index_t var_count = mdp.vars.count();

  const json &actions = detail::array_at(detail::member(doc, "actions", "document"), "actions");
  if (actions.empty()) throw std::runtime_error("model: actions must not be empty");
  for (size_t a = 0; a < actions.size(); ++a) {
    const std::string name =
        detail::string_at(actions[a], "actions[" + std::to_string(a) + "]");
    if (std::find(mdp.actions.begin(), mdp.actions.end(), name) != mdp.actions.end())
      throw std::runtime_error("model: actions[" + std::to_string(a) +
                               "] repeats the action name \"" + name + "\"");
    mdp.actions.push_back(name);
  }
  const auto action_count = mdp.actions.size();

  const json &factors = detail::array_at(detail::member(doc, "factors", "document"), "factors");
  if (static_cast<index_t>(factors.size()) != var_count)
    throw std::runtime_error("model: expected one factor per variable (" +
                             std::to_string(var_count) + "), found " +
                             std::to_string(factors.size()));
  for (size_t fi = 0; fi < factors.size(); ++fi) {
    const std::string path = "factors[" + std::to_string(fi) + "]";
    const std::string var_name = detail::string_at(detail::member(factors[fi], "var", path),
                                                   path + ".var");
    const auto var_it = by_name.find(var_name);
    if (var_it == by_name.end())
      throw std::runtime_error("model: " + path + ".var names unknown variable \"" + var_name +
                               "\"");
    if (var_it->second != static_cast<index_t>(fi))
      throw std::runtime_error("model: " + path + ".var is \"" + var_name +
                               "\" but factors are listed per variable, in order");

    const std::vector<index_t> listed = detail::listed_scope(
        detail::member(factors[fi], "parents", path), by_name, path + ".parents");
    const std::vector<index_t> perm = detail::assignment_permutation(mdp.vars, listed);
    const auto rows = static_cast<index_t>(perm.size());
    const index_t values = mdp.vars.sizes[fi];

    TransitionFactor factor;
    factor.var = static_cast<index_t>(fi);
    factor.parents = listed;
    detail::sort_scope(factor.parents);

    const json &table = detail::array_at(detail::member(factors[fi], "table", path),
                                         path + ".table");
    if (table.size() != action_count)
      throw std::runtime_error("model: " + path + ".table must have one block per action (" +
                               std::to_string(action_count) + "), found " +
                               std::to_string(table.size()));
    for (size_t a = 0; a < table.size(); ++a) {
      const std::string apath = path + ".table[" + std::to_string(a) + "]";
      const json &block = detail::array_at(table[a], apath);
      if (static_cast<index_t>(block.size()) != rows)
        throw std::runtime_error("model: " + apath + " must have one row per parent assignment (" +
                                 std::to_string(rows) + "), found " +
                                 std::to_string(block.size()));
      Mat m(rows, values);
      for (index_t r = 0; r < rows; ++r) {
        const std::string rpath = apath + "[" + std::to_string(r) + "]";
        const json &row = detail::array_at(block[static_cast<size_t>(r)], rpath);
        if (static_cast<index_t>(row.size()) != values)
          throw std::runtime_error("model: " + rpath + " must list " + std::to_string(values) +
                                   " probabilities, found " + std::to_string(row.size()));
        double sum = 0.0;
        for (index_t c = 0; c < values; ++c) {
          const double p = detail::number_at(row[static_cast<size_t>(c)],
                                             rpath + "[" + std::to_string(c) + "]");
          if (!(p >= 0.0) || !(p <= 1.0))
            throw std::runtime_error("model: " + rpath + "[" + std::to_string(c) +
                                     "] is not a probability");
          m(perm[static_cast<size_t>(r)], c) = p;
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
          std::ostringstream msg;
          msg << "model: " << rpath << " does not sum to one (sum = " << sum << ")";
          throw std::runtime_error(msg.str());
        }
      }
      factor.table.push_back(std::move(m));
    }
    mdp.factors.push_back(std::move(factor));
  }

  const json &rewards = detail::array_at(detail::member(doc, "rewards", "document"), "rewards");
  for (size_t ri = 0; ri < rewards.size(); ++ri) {
    const std::string path = "rewards[" + std::to_string(ri) + "]";
    const std::vector<index_t> listed = detail::listed_scope(
        detail::member(rewards[ri], "scope", path), by_name, path + ".scope");
    const std::vector<index_t> perm = detail::assignment_permutation(mdp.vars, listed);
    const auto width = static_cast<index_t>(perm.size());

    const json &table = detail::array_at(detail::member(rewards[ri], "table", path),
                                         path + ".table");
    if (table.size() != action_count && table.size() != 1)
      throw std::runtime_error("model: " + path + ".table must have one row per action (" +
                               std::to_string(action_count) + ") or a single shared row, found " +
                               std::to_string(table.size()));
    LocalScopeFunction reward;
    reward.scope = listed;
    detail::sort_scope(reward.scope);
    reward.table.resize(static_cast<index_t>(table.size()), width);
    for (size_t a = 0; a < table.size(); ++a) {
      const std::string apath = path + ".table[" + std::to_string(a) + "]";
      const json &row = detail::array_at(table[a], apath);
      if (static_cast<index_t>(row.size()) != width)
        throw std::runtime_error("model: " + apath + " must list " + std::to_string(width) +
                                 " values, found " + std::to_string(row.size()));
      for (index_t c = 0; c < width; ++c)
        reward.table(static_cast<index_t>(a), perm[static_cast<size_t>(c)]) =
            detail::number_at(row[static_cast<size_t>(c)], apath + "[" + std::to_string(c) + "]");
    }
    mdp.rewards.push_back(std::move(reward));
  }

  const json &basis = detail::array_at(detail::member(doc, "basis", "document"), "basis");
  for (size_t bi = 0; bi < basis.size(); ++bi) {
    const std::string path = "basis[" + std::to_string(bi) + "]";
    const std::vector<index_t> listed = detail::listed_scope(
        detail::member(basis[bi], "scope", path), by_name, path + ".scope");
    const std::vector<index_t> perm = detail::assignment_permutation(mdp.vars, listed);
    const auto width = static_cast<index_t>(perm.size());

    const json &table = detail::array_at(detail::member(basis[bi], "table", path),
                                         path + ".table");
    if (static_cast<index_t>(table.size()) != width)
      throw std::runtime_error("model: " + path + ".table must list " + std::to_string(width) +
                               " values, found " + std::to_string(table.size()));
    LocalScopeFunction func;
    func.scope = listed;
    detail::sort_scope(func.scope);
    func.table.resize(1, width);
    for (index_t c = 0; c < width; ++c)
      func.table(0, perm[static_cast<size_t>(c)]) =
          detail::number_at(table[static_cast<size_t>(c)], path + ".table[" + std::to_string(c) + "]");
    out.basis.funcs.push_back(std::move(func));
  }

  mdp.gamma = detail::number_at(detail::member(doc, "gamma", "document"), "gamma");

  const json &start = detail::array_at(detail::member(doc, "start", "document"), "start");
  if (static_cast<index_t>(start.size()) != var_count)
    throw std::runtime_error("model: start must list one value per variable (" +
                             std::to_string(var_count) + "), found " +
                             std::to_string(start.size()));
  for (size_t i = 0; i < start.size(); ++i)
    mdp.start.push_back(detail::integer_at(start[i], "start[" + std::to_string(i) + "]"));

  validate_fmdp(mdp);
  validate_basis(out.basis, mdp.vars);
  return out;
}

inline Model load_model(const std::string &path) {
  return model_from_json(load_json(path));
}

inline json model_to_json(const FactoredMdp &mdp, const BasisSet &basis) {
  json variables = json::array();
  for (index_t i = 0; i < mdp.vars.count(); ++i)
    variables.push_back(json{{"name", detail::var_name(mdp.vars, i)},
                             {"size", mdp.vars.sizes[static_cast<size_t>(i)]}});

  json factors = json::array();
  for (const TransitionFactor &f : mdp.factors) {
    json parents = json::array();
    for (index_t v : f.parents) parents.push_back(detail::var_name(mdp.vars, v));
    json table = json::array();
    for (const Mat &block : f.table) {
      json rows = json::array();
      for (index_t r = 0; r < block.rows(); ++r) {
        json row = json::array();
        for (index_t c = 0; c < block.cols(); ++c) row.push_back(block(r, c));
        rows.push_back(std::move(row));
      }
      table.push_back(std::move(rows));
    }
    factors.push_back(json{{"var", detail::var_name(mdp.vars, f.var)},
                           {"parents", std::move(parents)},
                           {"table", std::move(table)}});
  }

  json rewards = json::array();
  for (const LocalScopeFunction &r : mdp.rewards) {
    json scope = json::array();
    for (index_t v : r.scope) scope.push_back(detail::var_name(mdp.vars, v));
    json table = json::array();
    for (index_t a = 0; a < r.table.rows(); ++a) {
      json row = json::array();
      for (index_t c = 0; c < r.table.cols(); ++c) row.push_back(r.table(a, c));
      table.push_back(std::move(row));
    }
    rewards.push_back(json{{"scope", std::move(scope)}, {"table", std::move(table)}});
  }

  json basis_json = json::array();
  for (const LocalScopeFunction &h : basis.funcs) {
    json scope = json::array();
    for (index_t v : h.scope) scope.push_back(detail::var_name(mdp.vars, v));
    json table = json::array();
    for (index_t c = 0; c < h.table.cols(); ++c) table.push_back(h.table(0, c));
    basis_json.push_back(json{{"scope", std::move(scope)}, {"table", std::move(table)}});
  }

  json start = json::array();
  for (index_t v : mdp.start) start.push_back(v);

  return json{{"variables", std::move(variables)}, {"actions", mdp.actions},
              {"factors", std::move(factors)},     {"rewards", std::move(rewards)},
              {"basis", std::move(basis_json)},    {"gamma", mdp.gamma},
              {"start", std::move(start)}};
}

inline void save_model(const FactoredMdp &mdp, const BasisSet &basis, const std::string &path) {
  save_json(model_to_json(mdp, basis), path);
}

}  // namespace fvi
