// Command-line front end: loads factored models from JSON, runs the solvers
// and diagnostic harnesses, prints a one-line summary, and optionally writes
// a canonical JSON report. Exit code 0 means the run finished cleanly
// (converged where that applies), 2 flags a run that did not settle
// (divergence, iteration budget, failed check), and 1 is reserved for errors.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fvi/factored.hpp"
#include "fvi/fvi_solver.hpp"
#include "fvi/json_io.hpp"
#include "fvi/matrix.hpp"
#include "fvi/mdp.hpp"
#include "fvi/projection.hpp"
#include "fvi/sketch.hpp"
#include "fvi/version.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct CommonOpts {
  std::string model_path;
  std::string out_path;
  std::string projection = "npinv";
  std::optional<double> gamma;
  double epsilon = 1e-6;
  std::int64_t max_iters = 10000;
  std::string samples = "all";
  std::string sampling = "iid";
  std::uint64_t seed = 0;
  std::uint64_t flatten_cap = fvi::default_flatten_cap;
};

void add_model_flag(CLI::App *cmd, CommonOpts &opts) {
  cmd->add_option("--model", opts.model_path, "model JSON file")->required();
}

void add_out_flag(CLI::App *cmd, CommonOpts &opts) {
  cmd->add_option("--out", opts.out_path, "write a JSON report here");
}

void add_solver_flags(CLI::App *cmd, CommonOpts &opts,
                      const char *eps_help = "convergence threshold on successive deltas") {
  cmd->add_option("--gamma", opts.gamma, "override the model's discount factor");
  cmd->add_option("--epsilon", opts.epsilon, eps_help);
  cmd->add_option("--max-iters", opts.max_iters, "iteration budget");
  cmd->add_option("--flatten-cap", opts.flatten_cap,
                  "refuse to enumerate state spaces larger than this");
}

std::optional<std::uint64_t> parse_samples(const std::string &text) {
  if (text == "all") return std::nullopt;
  std::size_t used = 0;
  unsigned long long parsed = 0;
  try {
    parsed = std::stoull(text, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used != text.size() || parsed == 0)
    throw std::runtime_error("--samples expects a positive integer or \"all\", got '" + text +
                             "'");
  return parsed;
}

void add_projection_flag(CLI::App *cmd, CommonOpts &opts) {
  cmd->add_option("--projection", opts.projection,
                  "projection kind: l2, l2c, linf, linfc, l1, npinv, nht");
}

fvi::Model load_with_overrides(const CommonOpts &opts) {
  fvi::Model model = fvi::load_model(opts.model_path);
  if (opts.gamma) {
    model.mdp.gamma = *opts.gamma;
    fvi::validate_fmdp(model.mdp);
  }
  return model;
}

fvi::Mat flat_basis_or_throw(const fvi::Model &model, std::uint64_t cap) {
  if (model.basis.funcs.empty())
    throw std::runtime_error("the model has no basis functions; nothing to project onto");
  return fvi::flatten_basis(model.basis, model.mdp.vars, cap);
}

void maybe_write(const fvi::json &doc, const std::string &path) {
  if (!path.empty()) fvi::save_json(doc, path);
}

std::string where_written(const std::string &path) {
  return path.empty() ? "no report written" : "report written to " + path;
}

int exit_for(fvi::IterStatus status) { return status == fvi::IterStatus::converged ? 0 : 2; }

int run_solve_exact(const CommonOpts &opts) {
  const auto start = Clock::now();
  const fvi::Model model = load_with_overrides(opts);
  const fvi::FlatMdp flat = fvi::flatten(model.mdp, opts.flatten_cap);
  const fvi::ExactViResult result = fvi::exact_vi(flat, opts.epsilon, opts.max_iters);

  fvi::json doc{{"command", "solve-exact"},
                {"model", opts.model_path},
                {"gamma", flat.gamma},
                {"epsilon", opts.epsilon},
                {"max_iters", opts.max_iters},
                {"flatten_cap", opts.flatten_cap},
                {"status", to_string(result.trace.status)},
                {"values", fvi::vec_json(result.v)},
                {"trace", fvi::trace_json(result.trace)},
                {"wall_time_s", seconds_since(start)},
                {"library_version", fvi::library_version}};
  maybe_write(doc, opts.out_path);
  std::cout << "solve-exact: " << to_string(result.trace.status) << " after "
            << result.trace.iterations << " sweeps over " << flat.states() << " states; "
            << where_written(opts.out_path) << "\n";
  return exit_for(result.trace.status);
}

int run_solve_avi(const CommonOpts &opts) {
  const auto start = Clock::now();
  const fvi::Model model = load_with_overrides(opts);
  const fvi::FlatMdp flat = fvi::flatten(model.mdp, opts.flatten_cap);
  const fvi::Mat h = flat_basis_or_throw(model, opts.flatten_cap);
  const fvi::Projector proj = fvi::make_projector(fvi::parse_proj_kind(opts.projection), h);
  const fvi::AviResult result = fvi::avi_iterate(flat, h, proj, opts.epsilon, opts.max_iters);

  double residual = std::numeric_limits<double>::quiet_NaN();
  if (result.w.allFinite()) {
    const fvi::Vec hw = h * result.w;
    residual = fvi::max_norm(fvi::Vec(fvi::bellman_apply(flat, hw) - hw));
  }

  fvi::json doc{{"command", "solve-avi"},
                {"model", opts.model_path},
                {"projection", opts.projection},
                {"gamma", flat.gamma},
                {"epsilon", opts.epsilon},
                {"max_iters", opts.max_iters},
                {"flatten_cap", opts.flatten_cap},
                {"status", to_string(result.trace.status)},
                {"weights", fvi::vec_json(result.w)},
                {"trace", fvi::trace_json(result.trace)},
                {"residual", residual},
                {"wall_time_s", seconds_since(start)},
                {"library_version", fvi::library_version}};
  maybe_write(doc, opts.out_path);
  std::cout << "solve-avi(" << opts.projection << "): " << to_string(result.trace.status)
            << " after " << result.trace.iterations << " iterations; "
            << where_written(opts.out_path) << "\n";
  return exit_for(result.trace.status);
}

int run_solve_fvi(const CommonOpts &opts) {
  const fvi::Model model = load_with_overrides(opts);

  fvi::FviConfig config;
  config.samples = parse_samples(opts.samples);
  config.mode = fvi::parse_sampling_mode(opts.sampling);
  config.seed = opts.seed;
  config.projection = fvi::parse_proj_kind(opts.projection);
  config.epsilon = opts.epsilon;
  config.max_iters = opts.max_iters;
  config.flatten_cap = opts.flatten_cap;

  const fvi::FviReport report = fvi::fvi_solve(model.mdp, model.basis, config);

  fvi::json doc = fvi::report_json(report);
  doc["command"] = "solve-fvi";
  doc["model"] = opts.model_path;
  maybe_write(doc, opts.out_path);
  std::cout << "solve-fvi(" << opts.projection << ", " << opts.samples << " samples): "
            << to_string(report.trace.status) << " after " << report.trace.iterations
            << " iterations on " << report.sampled_states << " states; "
            << where_written(opts.out_path) << "\n";
  return exit_for(report.trace.status);
}

int run_project(const CommonOpts &opts) {
  const auto start = Clock::now();
  const fvi::Model model = load_with_overrides(opts);
  const fvi::FlatMdp flat = fvi::flatten(model.mdp, opts.flatten_cap);
  const fvi::Mat h = flat_basis_or_throw(model, opts.flatten_cap);
  const fvi::Projector proj = fvi::make_projector(fvi::parse_proj_kind(opts.projection), h);

  const fvi::ExactViResult exact = fvi::exact_vi(flat, opts.epsilon, opts.max_iters);
  const fvi::Vec w = proj.apply(exact.v);
  const double deviation = fvi::max_norm(fvi::Vec(h * w - exact.v));
  const double bound = fvi::apriori_error_bound(flat, h, proj, exact.v);

  fvi::json doc{{"command", "project"},
                {"model", opts.model_path},
                {"projection", opts.projection},
                {"gamma", flat.gamma},
                {"epsilon", opts.epsilon},
                {"flatten_cap", opts.flatten_cap},
                {"status", "ok"},
                {"weights", fvi::vec_json(w)},
                {"deviation", deviation},
                {"error_bound", bound},
                {"exact_status", to_string(exact.trace.status)},
                {"wall_time_s", seconds_since(start)},
                {"library_version", fvi::library_version}};
  maybe_write(doc, opts.out_path);
  std::cout << "project(" << opts.projection << "): representation gap " << deviation
            << ", iteration error bound " << bound << "; " << where_written(opts.out_path)
            << "\n";
  return 0;
}

int run_check_projector(const CommonOpts &opts, std::int64_t trials) {
  const auto start = Clock::now();
  const fvi::Model model = load_with_overrides(opts);
  const fvi::Mat h = flat_basis_or_throw(model, opts.flatten_cap);
  const fvi::Projector proj = fvi::make_projector(fvi::parse_proj_kind(opts.projection), h);
  const fvi::NonExpansionReport report = fvi::check_nonexpansion(h, proj, trials, opts.seed);

  fvi::json doc = fvi::report_json(report);
  doc["command"] = "check-projector";
  doc["model"] = opts.model_path;
  doc["projection"] = opts.projection;
  doc["seed"] = opts.seed;
  doc["wall_time_s"] = seconds_since(start);
  maybe_write(doc, opts.out_path);
  std::cout << "check-projector(" << opts.projection << "): " << report.violations << "/"
            << report.trials << " expanding pairs, max ratio " << report.max_ratio << "; "
            << where_written(opts.out_path) << "\n";
  return 0;
}

int run_gen_sysadmin(const CommonOpts &opts, fvi::index_t m, const std::string &topology) {
  const fvi::Model model = fvi::gen_sysadmin(m, fvi::parse_topology(topology), opts.seed);
  if (opts.out_path.empty()) throw std::runtime_error("gen-sysadmin needs --out");
  fvi::save_model(model.mdp, model.basis, opts.out_path);
  std::cout << "gen-sysadmin: wrote " << m << "-machine " << topology << " model to "
            << opts.out_path << "\n";
  return 0;
}

int run_sketch_verify(const CommonOpts &opts, fvi::index_t rows, fvi::index_t inner,
                      fvi::index_t cols, double eps, double delta, std::int64_t trials) {
  const auto start = Clock::now();
  const std::optional<std::uint64_t> n_prime = parse_samples(opts.samples);
  if (!n_prime) throw std::runtime_error("sketch-verify needs an explicit --samples count");
  const fvi::SketchReport report = fvi::verify_bound(
      fvi::uniform_dense_generator(rows, inner, cols), *n_prime, eps, delta, trials, opts.seed);

  fvi::json doc = fvi::report_json(report);
  doc["command"] = "sketch-verify";
  doc["rows"] = rows;
  doc["inner"] = inner;
  doc["cols"] = cols;
  doc["seed"] = opts.seed;
  doc["wall_time_s"] = seconds_since(start);
  maybe_write(doc, opts.out_path);
  std::cout << "sketch-verify: exceedance rate " << report.violation_rate << " over "
            << report.trials << " trials (target " << delta << "); "
            << where_written(opts.out_path) << "\n";
  return 0;
}

int run_aux_mdp_check(const CommonOpts &opts) {
  const auto start = Clock::now();
  const fvi::Model model = load_with_overrides(opts);
  const fvi::FlatMdp flat = fvi::flatten(model.mdp, opts.flatten_cap);
  const fvi::Mat h = flat_basis_or_throw(model, opts.flatten_cap);

  const fvi::UcReport uc = fvi::check_uc(h);
  fvi::json doc{{"command", "aux-mdp-check"},
                {"model", opts.model_path},
                {"uc", uc.is_uc},
                {"row_sum", uc.row_sum},
                {"tolerance", opts.epsilon},
                {"library_version", fvi::library_version}};

  if (!uc.is_uc || std::abs(uc.row_sum - 1.0) > 1e-9) {
    doc["status"] = "not-uc";
    doc["wall_time_s"] = seconds_since(start);
    maybe_write(doc, opts.out_path);
    std::cout << "aux-mdp-check: basis is not a unit-row-sum nonnegative cover; "
              << where_written(opts.out_path) << "\n";
    return 2;
  }

  const fvi::FlatMdp aux = fvi::build_aux_mdp(flat, h);
  const fvi::Mat g = fvi::aux_projection(h);

  // Run the two iterations side by side from zero: basis weights under the
  // column-normalized transpose projection, and exact value iteration in the
  // observation process. With a single action they coincide step for step;
  // with several, the weight iterates can only sit above the observation
  // values, and the gap is reported.
  fvi::Vec w = fvi::Vec::Zero(h.cols());
  fvi::Vec v = fvi::Vec::Zero(h.cols());
  double max_gap = 0.0;
  const std::int64_t steps = std::min<std::int64_t>(opts.max_iters, 500);
  for (std::int64_t t = 0; t < steps; ++t) {
    w = g * fvi::bellman_apply(flat, fvi::Vec(h * w));
    v = fvi::bellman_apply(aux, v);
    max_gap = std::max(max_gap, fvi::max_norm(fvi::Vec(w - v)));
  }

  const bool ok = max_gap <= opts.epsilon;
  doc["status"] = ok ? "ok" : "mismatch";
  doc["iterations"] = steps;
  doc["max_gap"] = max_gap;
  doc["wall_time_s"] = seconds_since(start);
  maybe_write(doc, opts.out_path);
  std::cout << "aux-mdp-check: max per-iteration gap " << max_gap << " over " << steps
            << " steps (" << doc["status"].get<std::string>() << "); "
            << where_written(opts.out_path) << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Factored MDP solvers: value iteration in basis-function coordinates,\n"
               "with projection diagnostics and sampled-product verification."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fvi::library_version));

  CommonOpts opts;

  CLI::App *solve_exact = app.add_subcommand("solve-exact", "flatten and solve exactly");
  add_model_flag(solve_exact, opts);
  add_solver_flags(solve_exact, opts);
  add_out_flag(solve_exact, opts);

  CLI::App *solve_avi = app.add_subcommand(
      "solve-avi", "iterate basis weights on the flattened model");
  add_model_flag(solve_avi, opts);
  add_projection_flag(solve_avi, opts);
  add_solver_flags(solve_avi, opts);
  add_out_flag(solve_avi, opts);

  CLI::App *solve_fvi = app.add_subcommand(
      "solve-fvi", "iterate basis weights on factored tables, optionally on sampled states");
  add_model_flag(solve_fvi, opts);
  add_projection_flag(solve_fvi, opts);
  add_solver_flags(solve_fvi, opts);
  solve_fvi->add_option("--samples", opts.samples,
                        "number of sampled states, or \"all\" for the full space");
  solve_fvi->add_option("--sampling", opts.sampling, "state sampling mode: iid or distinct");
  solve_fvi->add_option("--seed", opts.seed, "sampling seed");
  add_out_flag(solve_fvi, opts);

  CLI::App *project = app.add_subcommand(
      "project", "project the exact values onto the basis and report the gap");
  add_model_flag(project, opts);
  add_projection_flag(project, opts);
  add_solver_flags(project, opts);
  add_out_flag(project, opts);

  std::int64_t trials = 200;
  CLI::App *check_projector = app.add_subcommand(
      "check-projector", "sample value pairs for max-norm expansion under the projection");
  add_model_flag(check_projector, opts);
  add_projection_flag(check_projector, opts);
  check_projector->add_option("--trials", trials, "sampled pairs");
  check_projector->add_option("--seed", opts.seed, "sampling seed");
  check_projector->add_option("--flatten-cap", opts.flatten_cap,
                              "refuse to enumerate state spaces larger than this");
  add_out_flag(check_projector, opts);

  fvi::index_t machines = 3;
  std::string topology = "ring";
  CLI::App *gen = app.add_subcommand("gen-sysadmin", "write a network-administration benchmark");
  gen->add_option("--m", machines, "machine count")->required();
  gen->add_option("--topology", topology, "ring or star");
  gen->add_option("--seed", opts.seed,
                  "accepted for uniformity; generation is deterministic in --m and --topology");
  add_out_flag(gen, opts);

  fvi::index_t rows = 4, inner = 200, cols = 3;
  double sketch_eps = 0.2, delta = 0.1;
  std::int64_t sketch_trials = 500;
  CLI::App *sketch = app.add_subcommand(
      "sketch-verify", "measure how often sampled matrix products exceed the error threshold");
  sketch->add_option("--rows", rows, "rows of the left factor");
  sketch->add_option("--inner", inner, "shared inner dimension");
  sketch->add_option("--cols", cols, "columns of the right factor");
  sketch->add_option("--samples", opts.samples, "sampled inner indices per product")->required();
  sketch->add_option("--epsilon", sketch_eps, "error threshold scale");
  sketch->add_option("--delta", delta, "target exceedance probability");
  sketch->add_option("--trials", sketch_trials, "independent trials");
  sketch->add_option("--seed", opts.seed, "trial seed");
  add_out_flag(sketch, opts);

  CLI::App *aux = app.add_subcommand(
      "aux-mdp-check", "compare weight iteration against its observation process");
  add_model_flag(aux, opts);
  add_solver_flags(aux, opts, "maximum tolerated per-iteration gap");
  add_out_flag(aux, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  try {
    if (solve_exact->parsed()) return run_solve_exact(opts);
    if (solve_avi->parsed()) return run_solve_avi(opts);
    if (solve_fvi->parsed()) return run_solve_fvi(opts);
    if (project->parsed()) return run_project(opts);
    if (check_projector->parsed()) return run_check_projector(opts, trials);
    if (gen->parsed()) return run_gen_sysadmin(opts, machines, topology);
    if (sketch->parsed())
      return run_sketch_verify(opts, rows, inner, cols, sketch_eps, delta, sketch_trials);
    if (aux->parsed()) return run_aux_mdp_check(opts);
  } catch (const std::exception &err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}
