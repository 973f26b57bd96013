#pragma once

// Brute-force reference implementations used only by the test suite. These
// deliberately avoid the library's own algorithms: linear programs are solved
// by vertex enumeration, projections by grid refinement, and MDPs by explicit
// policy enumeration, so test expectations do not inherit bugs from the code
// under test.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "fvi/matrix.hpp"

namespace oracle {

using fvi::Mat;
using fvi::Vec;
using fvi::index_t;

// Optimum of  opt c.x  s.t.  a x <= b, x >= 0  by enumerating all candidate
// vertices (every n-subset of the rows of [a; -I]). The caller must pass a
// feasible bounded problem. Returns the best objective value.
inline double lp_vertex_optimum(const Vec &c, const Mat &a, const Vec &b, bool maximize) {
  const index_t n = c.size();
  const index_t m = a.rows();
  const index_t total = m + n;
  std::vector<index_t> pick(static_cast<size_t>(n));
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();

  std::function<void(index_t, index_t)> rec = [&](index_t start, index_t depth) {
    if (depth == n) {
      Mat sys(n, n);
      Vec rhs(n);
      for (index_t i = 0; i < n; ++i) {
        const index_t row = pick[static_cast<size_t>(i)];
        if (row < m) {
          sys.row(i) = a.row(row);
          rhs(i) = b(row);
        } else {
          sys.row(i).setZero();
          sys(i, row - m) = 1.0;
          rhs(i) = 0.0;
        }
      }
      Eigen::FullPivLU<Mat> lu(sys);
      if (!lu.isInvertible()) return;
      Vec x = lu.solve(rhs);
      if ((x.array() < -1e-9).any()) return;
      if (((a * x - b).array() > 1e-9).any()) return;
      const double val = c.dot(x);
      if (maximize ? val > best : val < best) best = val;
      return;
    }
    for (index_t r = start; r < total; ++r) {
      pick[static_cast<size_t>(depth)] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

// Coarse-to-fine grid minimization of an arbitrary objective over a box
// centered at `center` with half-width `radius` per coordinate. Each round
// evaluates pts^k lattice points and shrinks the box around the best one.
inline Vec grid_search_min(const std::function<double(const Vec &)> &f, Vec center,
                           double radius, int rounds = 9, int pts = 21) {
  const index_t k = center.size();
  Vec best_w = center;
  for (int round = 0; round < rounds; ++round) {
    double best = std::numeric_limits<double>::infinity();
    Vec local_best = best_w;
    std::vector<int> idx(static_cast<size_t>(k), 0);
    const long count = static_cast<long>(std::pow(static_cast<double>(pts), static_cast<double>(k)));
    for (long it = 0; it < count; ++it) {
      Vec w(k);
      long rem = it;
      for (index_t d = 0; d < k; ++d) {
        const int g = static_cast<int>(rem % pts);
        rem /= pts;
        w(d) = center(d) - radius + 2.0 * radius * g / (pts - 1);
      }
      const double val = f(w);
      if (val < best) {
        best = val;
        local_best = w;
      }
    }
    best_w = local_best;
    center = local_best;
    radius *= 2.5 / (pts - 1);  // keep a margin beyond one grid cell
  }
  return best_w;
}

// Componentwise-best value function over all deterministic stationary
// policies: v*(s) = max_pi [(I - gamma P_pi)^{-1} r_pi](s). Only usable when
// |A|^N is small.
inline Vec policy_enum_vstar(const std::vector<Mat> &p, const std::vector<Vec> &r, double gamma) {
  const index_t n_states = p.at(0).rows();
  const size_t n_actions = p.size();
  Vec best = Vec::Constant(n_states, -std::numeric_limits<double>::infinity());
  std::vector<size_t> pol(static_cast<size_t>(n_states), 0);
  while (true) {
    Mat p_pi(n_states, n_states);
    Vec r_pi(n_states);
    for (index_t s = 0; s < n_states; ++s) {
      p_pi.row(s) = p[pol[static_cast<size_t>(s)]].row(s);
      r_pi(s) = r[pol[static_cast<size_t>(s)]](s);
    }
    const Mat sys = Mat::Identity(n_states, n_states) - gamma * p_pi;
    const Vec v = Eigen::FullPivLU<Mat>(sys).solve(r_pi);
    best = best.cwiseMax(v);
    // advance the policy odometer
    index_t d = 0;
    while (d < n_states) {
      if (++pol[static_cast<size_t>(d)] < n_actions) break;
      pol[static_cast<size_t>(d)] = 0;
      ++d;
    }
    if (d == n_states) break;
  }
  return best;
}

}  // namespace oracle
