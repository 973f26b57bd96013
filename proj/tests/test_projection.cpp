#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fvi/projection.hpp"
#include "hard_lp_instances.hpp"
#include "oracles.hpp"

using namespace fvi;

namespace {

Mat column_12() {
  Mat h(2, 1);
  h << 1.0, 2.0;
  return h;
}

Vec ones2() { return Vec::Ones(2); }

Mat random_mat(std::mt19937_64 &rng, index_t rows, index_t cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat m(rows, cols);
  for (index_t i = 0; i < rows; ++i)
    for (index_t j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Vec random_vec(std::mt19937_64 &rng, index_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(n);
  for (index_t i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

TEST_CASE("least-squares projection can expand the max-norm") {
  const Mat h = column_12();
  const Vec w = project_l2(h, ones2());
  REQUIRE(w(0) == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(max_norm(Vec(h * w)) == Catch::Approx(1.2).margin(1e-12));  // above ||v|| = 1
}

TEST_CASE("least-squares projection is exact on an identity basis") {
  std::mt19937_64 rng(7);
  const Vec v = random_vec(rng, 4);
  const Vec w = project_l2(Mat::Identity(4, 4), v);
  REQUIRE(max_norm(Vec(w - v)) < 1e-12);
}

TEST_CASE("least-squares projection of an orthogonal target is zero") {
  Mat h(2, 1);
  h << 1.0, 1.0;
  Vec v(2);
  v << 1.0, -1.0;
  REQUIRE(max_norm(project_l2(h, v)) < 1e-12);
}

TEST_CASE("capped least squares respects the max-norm cap") {
  const Mat h = column_12();
  const Vec w = project_l2_constrained(h, ones2());
  REQUIRE(w(0) == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(max_norm(Vec(h * w)) <= 1.0 + 1e-9);
}

TEST_CASE("capped least squares equals plain least squares when the cap is slack") {
  Mat h(2, 1);
  h << 1.0, 1.0;
  const Vec plain = project_l2(h, ones2());
  const Vec capped = project_l2_constrained(h, ones2());
  REQUIRE(max_norm(Vec(plain - capped)) < 1e-7);
  REQUIRE(max_norm(project_l2_constrained(h, Vec::Zero(2))) < 1e-12);
}

TEST_CASE("max-norm projection reproduces the worked single-basis example") {
  const Mat h = column_12();
  const Vec w = project_linf(h, ones2());
  REQUIRE(w(0) == Catch::Approx(2.0 / 3.0).margin(1e-9));
  REQUIRE(max_norm(Vec(h * w)) == Catch::Approx(4.0 / 3.0).margin(1e-9));
}

TEST_CASE("max-norm projection is exact on an identity basis") {
  std::mt19937_64 rng(8);
  const Vec v = random_vec(rng, 5);
  const Vec w = project_linf(Mat::Identity(5, 5), v);
  REQUIRE(max_norm(Vec(w - v)) < 1e-9);
}

TEST_CASE("max-norm projection matches a grid search") {
  std::mt19937_64 rng(99);
  const Mat h = random_mat(rng, 6, 2);
  const Vec v = random_vec(rng, 6);
  const Vec w = project_linf(h, v);
  const auto objective = [&](const Vec &cand) { return max_norm(Vec(h * cand - v)); };
  const Vec ref = oracle::grid_search_min(objective, Vec::Zero(2), 8.0);
  REQUIRE(objective(w) <= objective(ref) + 1e-4);
}

TEST_CASE("capped max-norm projection trades residual for the cap") {
  const Mat h = column_12();
  const Vec w = project_linf_constrained(h, ones2());
  REQUIRE(w(0) == Catch::Approx(0.5).margin(1e-9));
  REQUIRE(max_norm(Vec(h * w)) <= 1.0 + 1e-9);
  REQUIRE(max_norm(Vec(h * w - ones2())) == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("capped max-norm projection equals the uncapped one when the cap is slack") {
  std::mt19937_64 rng(11);
  const Vec v = random_vec(rng, 4);
  const Mat id = Mat::Identity(4, 4);
  const Vec a = project_linf(id, v);
  const Vec b = project_linf_constrained(id, v);
  REQUIRE(max_norm(Vec(a - b)) < 1e-9);
  REQUIRE(max_norm(project_linf_constrained(id, Vec::Zero(4))) < 1e-12);
}

TEST_CASE("L1 projection picks the weighted median and keeps the norm bounded") {
  const Mat h = column_12();
  const Vec w = project_l1(h, ones2());
  REQUIRE(w(0) == Catch::Approx(0.5).margin(1e-9));
  REQUIRE(max_norm(Vec(h * w)) <= max_norm(ones2()) + 1e-9);
}

TEST_CASE("L1 projection is exact on an identity basis") {
  std::mt19937_64 rng(13);
  const Vec v = random_vec(rng, 5);
  const Vec w = project_l1(Mat::Identity(5, 5), v);
  REQUIRE(max_norm(Vec(w - v)) < 1e-9);
}

TEST_CASE("L1 projection can grow the max-norm even at its unique optimum") {
  // 4|w-1| + 2|w-0.4| has its only minimum at w = 1, so no tie-breaking rule
  // can rescue the norm bound here: ||H w||_inf = 2 while ||v||_inf = 1.
  Mat h(5, 1);
  h << 1.0, 1.0, 1.0, 1.0, 2.0;
  Vec v(5);
  v << 1.0, 1.0, 1.0, 1.0, 0.8;
  const Vec w = project_l1(h, v);
  REQUIRE(w(0) == Catch::Approx(1.0).margin(1e-8));
  REQUIRE((h * w - v).cwiseAbs().sum() == Catch::Approx(1.2).margin(1e-8));
  REQUIRE(max_norm(Vec(h * w)) == Catch::Approx(2.0).margin(1e-8));
}

TEST_CASE("L1 projection residual never exceeds the trivial zero-weight bound") {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    const index_t n = 2 + static_cast<index_t>(trial % 7);
    const index_t k = 1 + static_cast<index_t>(trial % 3);
    const Mat h = random_mat(rng, n, k);
    const Vec v = random_vec(rng, n);
    const Vec w = project_l1(h, v);
    REQUIRE((h * w - v).cwiseAbs().sum() <= v.cwiseAbs().sum() + 1e-9);
  }
}

TEST_CASE("L1 projection matches a grid search on the residual") {
  std::mt19937_64 rng(555);
  const Mat h = random_mat(rng, 6, 2);
  const Vec v = random_vec(rng, 6);
  const Vec w = project_l1(h, v);
  const auto objective = [&](const Vec &cand) { return (h * cand - v).cwiseAbs().sum(); };
  const Vec ref = oracle::grid_search_min(objective, Vec::Zero(2), 8.0);
  REQUIRE(objective(w) <= objective(ref) + 1e-4);
}

TEST_CASE("L1 projection survives near-degenerate linear programs") {
  const Mat h = testutil::near_degenerate_basis();
  const struct {
    Vec v;
    double residual;
    double norm;
  } cases[] = {
      {testutil::near_degenerate_target_a(), 23.839291821373365, 0.75739901948518351},
      {testutil::near_degenerate_target_b(), 23.988533155075075, 0.82618440014902528},
  };
  for (const auto &c : cases) {
    const Vec w = project_l1(h, c.v);
    const double l1_error = (h * w - c.v).cwiseAbs().sum();
    REQUIRE(l1_error == Catch::Approx(c.residual).margin(1e-6));
    const Vec wls = (h.transpose() * h).ldlt().solve(h.transpose() * c.v);
    REQUIRE(l1_error <= (h * wls - c.v).cwiseAbs().sum() + 1e-9);
    REQUIRE(max_norm(Vec(h * w)) == Catch::Approx(c.norm).margin(1e-6));
  }
}

TEST_CASE("normalization leaves an identity pair untouched") {
  const Mat id = Mat::Identity(3, 3);
  REQUIRE((normalize_linear(id, id) - id).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalization rescales the single-column least squares matrix") {
  const Mat h = column_12();
  const Mat raw = normalize_linear_raw(mat_pinv(h), h);
  REQUIRE(raw(0, 0) == Catch::Approx(1.0 / 3.0).margin(1e-12));
  REQUIRE(raw(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
  // The entrywise stage alone leaves ||H G||_inf = 4/3; the final rescaling
  // brings it back to exactly one.
  REQUIRE(max_norm(Mat(h * raw)) == Catch::Approx(4.0 / 3.0).margin(1e-12));
  const Mat g = normalize_linear(mat_pinv(h), h);
  REQUIRE(g(0, 0) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(g(0, 1) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(max_norm(Mat(h * g)) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("normalizing the transpose of a stochastic basis needs no rescue scaling") {
  Mat h(3, 2);
  h << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  const Mat raw = normalize_linear_raw(Mat(h.transpose()), h);
  const Mat prod = h * raw;
  for (index_t i = 0; i < prod.rows(); ++i)
    REQUIRE(prod.row(i).cwiseAbs().sum() == Catch::Approx(1.0).margin(1e-12));
  const Mat full = normalize_linear(Mat(h.transpose()), h);
  REQUIRE((full - raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalization zeroes entries with zero denominators") {
  Mat h(2, 2);
  h << 1.0, 0.0, 2.0, 0.0;  // second basis column identically zero
  Mat g(2, 2);
  g << 0.2, 0.4, 1.0, 1.0;
  const Mat out = normalize_linear(g, h);
  REQUIRE(out(1, 0) == 0.0);
  REQUIRE(out(1, 1) == 0.0);
  REQUIRE(max_norm(Mat(h * out)) <= 1.0 + 1e-12);
}

TEST_CASE("projector factory produces the documented matrices") {
  const Mat h = column_12();
  const Projector npinv = make_projector(ProjKind::npinv, h);
  REQUIRE(npinv.linear());
  REQUIRE(npinv.g(0, 0) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(npinv.g(0, 1) == Catch::Approx(0.25).margin(1e-12));

  const Mat id = Mat::Identity(3, 3);
  const Projector l2 = make_projector(ProjKind::l2, id);
  REQUIRE((l2.g - id).cwiseAbs().maxCoeff() < 1e-12);

  Mat hs(3, 2);
  hs << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  const Projector nht = make_projector(ProjKind::nht, hs);
  REQUIRE(max_norm(Mat(hs * nht.g)) == Catch::Approx(1.0).margin(1e-10));

  REQUIRE_THROWS_AS(make_projector(ProjKind::linear, h), std::invalid_argument);
  const Projector lin = make_linear_projector(mat_pinv(h), h);
  REQUIRE(lin.apply(ones2())(0) == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("projection kind names round-trip") {
  for (ProjKind kind : {ProjKind::l2, ProjKind::l2c, ProjKind::linf, ProjKind::linfc,
                        ProjKind::l1, ProjKind::npinv, ProjKind::nht}) {
    REQUIRE(parse_proj_kind(to_string(kind)) == kind);
  }
  REQUIRE_THROWS_AS(parse_proj_kind("l3"), std::invalid_argument);
}

TEST_CASE("normalized projections are certified non-expansive") {
  std::mt19937_64 rng(2024);
  const Mat h = random_mat(rng, 8, 3);
  const Projector proj = make_projector(ProjKind::npinv, h);
  const NonExpansionReport report = check_nonexpansion(h, proj, 200, 5);
  REQUIRE(report.op_norm.has_value());
  REQUIRE(*report.op_norm == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(report.violations == 0);
  REQUIRE(report.max_ratio <= 1.0 + 1e-9);
}

TEST_CASE("plain least squares is flagged as an expansion on the single-column basis") {
  const Mat h = column_12();
  const Projector proj = make_projector(ProjKind::l2, h);
  const NonExpansionReport report = check_nonexpansion(h, proj, 1000, 17);
  REQUIRE(*report.op_norm == Catch::Approx(1.2).margin(1e-12));
  REQUIRE(report.violations > 0);
  REQUIRE(report.max_ratio > 1.05);
}

TEST_CASE("the sampler catches the L1 projection expanding") {
  std::mt19937_64 rng(31337);
  const Mat h = random_mat(rng, 6, 3);
  const Projector proj = make_projector(ProjKind::l1, h);
  const NonExpansionReport report = check_nonexpansion(h, proj, 500, 23);
  REQUIRE(!report.op_norm.has_value());
  REQUIRE(report.trials == 500);
  REQUIRE(report.violations > 0);
  REQUIRE(report.max_ratio > 1.0 + 1e-7);
  REQUIRE(report.max_ratio < 10.0);
}

TEST_CASE("projections are positively homogeneous") {
  std::mt19937_64 rng(606);
  const Mat h = random_mat(rng, 6, 2);
  const Vec v = random_vec(rng, 6);
  for (ProjKind kind : {ProjKind::l2, ProjKind::linf, ProjKind::linfc, ProjKind::l1,
                        ProjKind::npinv, ProjKind::nht}) {
    const Projector proj = make_projector(kind, h);
    for (double alpha : {0.5, 2.0}) {
      const Vec lhs = h * proj.apply(Vec(alpha * v));
      const Vec rhs = alpha * (h * proj.apply(v));
      REQUIRE(max_norm(Vec(lhs - rhs)) < 1e-7);
    }
  }
  // The iterative solver behind the capped least squares kind only promises
  // a duality gap, so its homogeneity check gets a looser budget.
  const Projector l2c = make_projector(ProjKind::l2c, h);
  for (double alpha : {0.5, 2.0}) {
    const Vec lhs = h * l2c.apply(Vec(alpha * v));
    const Vec rhs = alpha * (h * l2c.apply(v));
    REQUIRE(max_norm(Vec(lhs - rhs)) < 1e-3);
  }
}

TEST_CASE("projections recover exact representations") {
  std::mt19937_64 rng(909);
  const Mat h = random_mat(rng, 7, 3);
  const Vec w_true = random_vec(rng, 3);
  const Vec v = h * w_true;
  for (ProjKind kind : {ProjKind::l2, ProjKind::linf, ProjKind::l1}) {
    const Projector proj = make_projector(kind, h);
    REQUIRE(max_norm(Vec(h * proj.apply(v) - v)) < 1e-8);
  }
}
