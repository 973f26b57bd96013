#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "fvi/fvi_solver.hpp"
#include "random_models.hpp"

using namespace fvi;
using testutil::random_fmdp;
using testutil::random_local_basis;

namespace {

// Single binary variable that always jumps to state 1, with the two-point
// basis [1, 2]: the factored rendition of the divergence fixture.
Model funnel_model(double reward) {
  Model model;
  FactoredMdp &mdp = model.mdp;
  mdp.vars.sizes = {2};
  mdp.actions = {"go"};
  TransitionFactor f;
  f.var = 0;
  f.parents = {0};
  Mat t(2, 2);
  t << 0.0, 1.0, 0.0, 1.0;
  f.table.push_back(t);
  mdp.factors.push_back(std::move(f));
  if (reward != 0.0) {
    LocalScopeFunction r;
    r.table = Mat::Constant(1, 1, reward);
    mdp.rewards.push_back(std::move(r));
  }
  mdp.gamma = 0.9;
  mdp.start = {0};

  LocalScopeFunction h;
  h.scope = {0};
  h.table = Mat(1, 2);
  h.table << 1.0, 2.0;
  model.basis.funcs.push_back(std::move(h));
  return model;
}

BasisSet indicator_basis(const VarSpace &vs) {
  BasisSet basis;
  const auto total = state_count(vs);
  std::vector<index_t> full_scope;
  for (index_t i = 0; i < vs.count(); ++i) full_scope.push_back(i);
  for (std::uint64_t s = 0; s < *total; ++s) {
    LocalScopeFunction ind;
    ind.scope = full_scope;
    ind.table = Mat::Zero(1, static_cast<index_t>(*total));
    ind.table(0, static_cast<index_t>(s)) = 1.0;
    basis.funcs.push_back(std::move(ind));
  }
  return basis;
}

}  // namespace

TEST_CASE("distinct sampling with a full budget is a permutation") {
  VarSpace vs;
  vs.sizes = {2, 3};
  const auto states = sample_states(vs, 6, 99, SamplingMode::distinct);
  std::set<std::uint64_t> seen;
  for (const Assign &x : states) seen.insert(state_index(vs, x));
  REQUIRE(seen.size() == 6);
  REQUIRE(*seen.begin() == 0);
  REQUIRE(*seen.rbegin() == 5);
}

TEST_CASE("iid sampling is close to uniform") {
  VarSpace vs;
  vs.sizes = {2};
  const auto states = sample_states(vs, 10000, 12345, SamplingMode::iid);
  double ones = 0;
  for (const Assign &x : states) ones += x[0];
  REQUIRE(std::abs(ones / 10000.0 - 0.5) <= 0.025);  // five binomial sigmas
}

TEST_CASE("sampling is reproducible per seed") {
  VarSpace vs;
  vs.sizes = {3, 4, 2};
  for (SamplingMode mode : {SamplingMode::iid, SamplingMode::distinct}) {
    const auto a = sample_states(vs, 10, 7, mode);
    const auto b = sample_states(vs, 10, 7, mode);
    REQUIRE(a == b);
    const auto c = sample_states(vs, 10, 8, mode);
    REQUIRE(a != c);
  }
}

TEST_CASE("distinct sampling refuses oversized requests and avoids repeats") {
  VarSpace vs;
  vs.sizes = {2, 2};
  REQUIRE_THROWS_AS(sample_states(vs, 5, 1, SamplingMode::distinct), std::invalid_argument);

  // wide space: indexable but too large for the shuffle path
  VarSpace wide;
  wide.sizes.assign(21, 2);
  auto picked = sample_states(wide, 100, 3, SamplingMode::distinct);
  std::set<std::uint64_t> seen;
  for (const Assign &x : picked) seen.insert(state_index(wide, x));
  REQUIRE(seen.size() == 100);

  // beyond any 64-bit count: dedupe keyed on the digits themselves
  VarSpace huge;
  huge.sizes.assign(70, 2);
  auto far = sample_states(huge, 50, 4, SamplingMode::distinct);
  std::set<Assign> unique_assigns(far.begin(), far.end());
  REQUIRE(unique_assigns.size() == 50);
}

TEST_CASE("backprojection of a constant basis is one") {
  std::mt19937_64 rng(55);
  const FactoredMdp mdp = random_fmdp(rng, 4, 2, 0.9);
  BasisSet basis;
  LocalScopeFunction c;
  c.table = Mat::Ones(1, 1);
  basis.funcs.push_back(c);
  Assign x = mdp.start;
  for (index_t a = 0; a < 2; ++a)
    REQUIRE(build_backprojection_row(mdp, basis, x, a)(0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("backprojection under deterministic factors evaluates at the successor") {
  // identity dynamics: the expected next value of h_k is h_k at the state itself
  FactoredMdp mdp;
  mdp.vars.sizes = {2, 3};
  mdp.actions = {"stay"};
  for (index_t i = 0; i < 2; ++i) {
    TransitionFactor f;
    f.var = i;
    f.parents = {i};
    f.table.push_back(Mat::Identity(mdp.vars.sizes[static_cast<size_t>(i)],
                                    mdp.vars.sizes[static_cast<size_t>(i)]));
    mdp.factors.push_back(std::move(f));
  }
  mdp.gamma = 0.9;
  mdp.start = {0, 0};

  std::mt19937_64 rng(77);
  const BasisSet basis = random_local_basis(rng, mdp.vars, 4);
  Assign x = {1, 2};
  const Vec row = build_backprojection_row(mdp, basis, x, 0);
  for (index_t k = 0; k < 4; ++k)
    REQUIRE(row(k) == Catch::Approx(basis.funcs[static_cast<size_t>(k)].value(mdp.vars, 0, x))
                          .margin(1e-12));
}

TEST_CASE("backprojection rows reproduce the flat product") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const FactoredMdp mdp = random_fmdp(rng, 3, 2, 0.9);
    const BasisSet basis = random_local_basis(rng, mdp.vars, 4);
    const FlatMdp flat = flatten(mdp);
    const Mat h = flatten_basis(basis, mdp.vars);
    std::vector<Assign> states;
    Assign x(3, 0);
    do {
      states.push_back(x);
    } while (next_assign(mdp.vars, x));
    for (index_t a = 0; a < 2; ++a) {
      const Mat expected = flat.p[static_cast<size_t>(a)] * h;
      for (size_t s = 0; s < states.size(); ++s) {
        const Vec row = build_backprojection_row(mdp, basis, states[s], a);
        REQUIRE(max_norm(Vec(row - expected.row(static_cast<index_t>(s)).transpose())) < 1e-9);
      }
    }
  }
}

TEST_CASE("sampled systems have the documented shapes") {
  const Model model = gen_sysadmin(3, Topology::ring);
  auto states = sample_states(model.mdp.vars, 5, 11, SamplingMode::iid);
  const SampledSystem sys = assemble_sampled(model.mdp, model.basis, states, ProjKind::npinv);
  REQUIRE(sys.h.rows() == 5);
  REQUIRE(sys.h.cols() == 4);
  REQUIRE(sys.proj.g.rows() == 4);
  REQUIRE(sys.proj.g.cols() == 5);
  REQUIRE(sys.b.size() == 4);
  for (const Mat &b : sys.b) {
    REQUIRE(b.rows() == 5);
    REQUIRE(b.cols() == 4);
  }
  REQUIRE(sys.states == states);
}

TEST_CASE("sampling everything reproduces the full-space projection") {
  const Model model = gen_sysadmin(3, Topology::ring);
  std::vector<Assign> states;
  Assign x(3, 0);
  do {
    states.push_back(x);
  } while (next_assign(model.mdp.vars, x));
  const SampledSystem sys = assemble_sampled(model.mdp, model.basis, states, ProjKind::npinv);
  const Projector full = make_projector(ProjKind::npinv, flatten_basis(model.basis, model.mdp.vars));
  REQUIRE((sys.proj.g - full.g).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a constant basis backprojects to a column of ones") {
  std::mt19937_64 rng(31);
  const FactoredMdp mdp = random_fmdp(rng, 3, 2, 0.9);
  BasisSet basis;
  LocalScopeFunction c;
  c.table = Mat::Ones(1, 1);
  basis.funcs.push_back(c);
  auto states = sample_states(mdp.vars, 6, 1, SamplingMode::iid);
  const SampledSystem sys = assemble_sampled(mdp, basis, states, ProjKind::npinv);
  for (const Mat &b : sys.b)
    REQUIRE((b - Mat::Ones(6, 1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duplicate basis functions are flagged as rank deficiency") {
  const Model model = gen_sysadmin(3, Topology::ring);
  BasisSet doubled = model.basis;
  doubled.funcs.push_back(doubled.funcs.back());
  auto states = sample_states(model.mdp.vars, 8, 5, SamplingMode::distinct);
  const SampledSystem sys = assemble_sampled(model.mdp, doubled, states, ProjKind::npinv);
  REQUIRE(sys.h_rank_deficient);

  FviConfig cfg;
  cfg.samples = 8;
  cfg.seed = 5;
  cfg.mode = SamplingMode::distinct;
  const FviReport report = fvi_solve(model.mdp, doubled, cfg);
  REQUIRE(!report.warnings.empty());
}

TEST_CASE("full sampling with per-state indicators recovers exact value iteration") {
  std::mt19937_64 rng(909);
  const FactoredMdp mdp = random_fmdp(rng, 3, 2, 0.9, 2);  // 8 states
  const BasisSet basis = indicator_basis(mdp.vars);
  FviConfig cfg;
  cfg.epsilon = 1e-10;
  const FviReport report = fvi_solve(mdp, basis, cfg);
  REQUIRE(report.trace.status == IterStatus::converged);
  const ExactViResult exact = exact_vi(flatten(mdp), 1e-10);
  REQUIRE(max_norm(Vec(report.w - exact.v)) < 1e-8);
}

TEST_CASE("full sampling replays tabular weight iteration step for step") {
  const Model model = gen_sysadmin(3, Topology::ring);
  FviConfig cfg;
  cfg.epsilon = 1e-9;
  const FviReport report = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(report.trace.status == IterStatus::converged);

  const FlatMdp flat = flatten(model.mdp);
  const Mat h = flatten_basis(model.basis, model.mdp.vars);
  const Projector proj = make_projector(ProjKind::npinv, h);
  const AviResult avi = avi_iterate(flat, h, proj, 1e-9, 10000);
  REQUIRE(avi.trace.status == IterStatus::converged);
  REQUIRE(avi.trace.iterations == report.trace.iterations);
  REQUIRE(max_norm(Vec(report.w - avi.w)) < 1e-12);
  for (size_t t = 0; t < avi.trace.deltas.size(); ++t)
    REQUIRE(std::abs(report.trace.deltas[t] - avi.trace.deltas[t]) < 1e-12);
}

TEST_CASE("the funnel model diverges under plain least squares and settles normalized") {
  const Model model = funnel_model(1.0);
  FviConfig cfg;
  cfg.projection = ProjKind::l2;
  cfg.max_iters = 2000;
  const FviReport diverged = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(diverged.trace.status == IterStatus::diverged);
  const auto &d = diverged.trace.deltas;
  REQUIRE(d.size() > 5);
  for (size_t t = 1; t + 1 < d.size(); ++t)
    REQUIRE(d[t + 1] / d[t] == Catch::Approx(1.08).margin(1e-9));

  cfg.projection = ProjKind::npinv;
  cfg.epsilon = 1e-12;
  const FviReport settled = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(settled.trace.status == IterStatus::converged);
  REQUIRE(settled.w(0) == Catch::Approx(5.0).margin(1e-9));
  // the weights settle, but the basis cannot represent the true values
  // (10, 10): the lookahead from H w = (5, 10) is (10, 10), residual 5
  REQUIRE(settled.residual == Catch::Approx(5.0).margin(1e-8));
}

TEST_CASE("residual diagnostics behave") {
  const Model zero_reward = funnel_model(0.0);
  std::vector<Assign> both = {{0}, {1}};
  REQUIRE(bellman_residual(zero_reward.mdp, zero_reward.basis, Vec::Zero(1), both) == 0.0);

  const Model model = gen_sysadmin(5, Topology::ring);
  FviConfig cfg;
  cfg.epsilon = 1e-10;
  const FviReport report = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(report.trace.status == IterStatus::converged);
  std::vector<Assign> states;
  Assign x(5, 0);
  do {
    states.push_back(x);
  } while (next_assign(model.mdp.vars, x));
  const double at_fixed_point = bellman_residual(model.mdp, model.basis, report.w, states);
  const double at_zero = bellman_residual(model.mdp, model.basis, Vec::Zero(6), states);
  REQUIRE(at_fixed_point == Catch::Approx(report.residual).margin(1e-12));
  REQUIRE(at_fixed_point <= at_zero);
}

TEST_CASE("sampled runs are deterministic and seed-sensitive") {
  const Model model = gen_sysadmin(5, Topology::ring);
  FviConfig cfg;
  cfg.samples = 16;
  cfg.seed = 7;
  cfg.epsilon = 1e-9;
  const FviReport a = fvi_solve(model.mdp, model.basis, cfg);
  const FviReport b = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(a.trace.status == IterStatus::converged);
  REQUIRE((a.w - b.w).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.trace.deltas == b.trace.deltas);
  REQUIRE(a.sampled_states == 16);

  cfg.seed = 8;
  const FviReport c = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE((a.w - c.w).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("the fixed-point error bound is reported in full-state mode only") {
  const Model model = gen_sysadmin(4, Topology::ring);
  FviConfig cfg;
  cfg.epsilon = 1e-10;
  const FviReport full = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(full.apriori_bound.has_value());

  const ExactViResult exact = exact_vi(flatten(model.mdp), 1e-10);
  const Mat h = flatten_basis(model.basis, model.mdp.vars);
  REQUIRE(max_norm(Vec(h * full.w - exact.v)) <= *full.apriori_bound + 1e-6);

  cfg.samples = 8;
  const FviReport sampled = fvi_solve(model.mdp, model.basis, cfg);
  REQUIRE(!sampled.apriori_bound.has_value());
}

TEST_CASE("sampled compositions of normalized kinds stay non-expansive") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    const FactoredMdp mdp = random_fmdp(rng, 4, 2, 0.9);
    const BasisSet basis = random_local_basis(rng, mdp.vars, 3);
    auto states = sample_states(mdp.vars, 12, static_cast<std::uint64_t>(trial), SamplingMode::iid);
    const ProjKind kind = trial % 2 == 0 ? ProjKind::npinv : ProjKind::nht;
    const SampledSystem sys = assemble_sampled(mdp, basis, states, kind);
    REQUIRE(max_norm(Mat(sys.h * sys.proj.g)) <= 1.0 + 1e-10);
  }
}

TEST_CASE("solver configuration is validated") {
  const Model model = gen_sysadmin(3, Topology::ring);
  FviConfig cfg;
  cfg.samples = 2;  // basis has 4 functions
  REQUIRE_THROWS_WITH(fvi_solve(model.mdp, model.basis, cfg),
                      Catch::Matchers::ContainsSubstring("basis size"));
  cfg.samples.reset();
  cfg.epsilon = 0.0;
  REQUIRE_THROWS_AS(fvi_solve(model.mdp, model.basis, cfg), std::invalid_argument);
  cfg.epsilon = 1e-6;
  cfg.flatten_cap = 4;
  REQUIRE_THROWS_WITH(fvi_solve(model.mdp, model.basis, cfg),
                      Catch::Matchers::ContainsSubstring("cap"));
}

TEST_CASE("the sample-size planner reproduces its worked values") {
  REQUIRE(plan_sample_size(10, 5, 0.1, 0.05) == 152019);
  REQUIRE(plan_sample_size(4, 3, 0.2, 0.1) == 4385);
  const double ratio = static_cast<double>(plan_sample_size(20, 5, 0.1, 0.05)) /
                       static_cast<double>(plan_sample_size(10, 5, 0.1, 0.05));
  REQUIRE(ratio > 4.0);
  REQUIRE(ratio < 4.5);
  REQUIRE_THROWS_AS(plan_sample_size(0, 5, 0.1, 0.05), std::invalid_argument);
  REQUIRE_THROWS_AS(plan_sample_size(10, 5, 0.0, 0.05), std::invalid_argument);
  REQUIRE_THROWS_AS(plan_sample_size(10, 5, 0.1, 1.0), std::invalid_argument);
}
