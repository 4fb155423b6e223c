#pragma once

// Test-only oracles, kept independent of the library's solver and
// enumeration code paths.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "treedual/lp.hpp"

namespace test_oracle {

// Brute-force minimizer for LPs whose feasible set is bounded: enumerates
// all candidate basic points (active-set subsets of rows and bounds) and
// returns the best feasible objective, or nullopt when no candidate is
// feasible.  O(C(m, n)) — only for tiny instances.
inline std::optional<double> brute_force_min(const treedual::lp::LinearProgram& lp,
                                             double tol = 1e-7) {
  using treedual::lp::Sense;
  const int n = lp.num_vars();
  struct Hyperplane {
    Eigen::VectorXd a;
    double b;
  };
  std::vector<Hyperplane> planes;
  std::vector<Hyperplane> must;  // equalities always active
  for (const auto& r : lp.rows) {
    if (r.sense == Sense::Equal)
      must.push_back({r.coeffs, r.rhs});
    else
      planes.push_back({r.coeffs, r.rhs});
  }
  for (int j = 0; j < n && j < static_cast<int>(lp.bounds.size()); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    if (lp.bounds[j].lower) planes.push_back({e, *lp.bounds[j].lower});
    if (lp.bounds[j].upper) planes.push_back({e, *lp.bounds[j].upper});
  }

  auto feasible = [&](const Eigen::VectorXd& x) {
    for (const auto& r : lp.rows) {
      const double v = r.coeffs.dot(x);
      if (r.sense == Sense::Equal ? std::abs(v - r.rhs) > tol : v - r.rhs > tol)
        return false;
    }
    for (int j = 0; j < n && j < static_cast<int>(lp.bounds.size()); ++j) {
      if (lp.bounds[j].lower && x[j] < *lp.bounds[j].lower - tol) return false;
      if (lp.bounds[j].upper && x[j] > *lp.bounds[j].upper + tol) return false;
    }
    return true;
  };

  const int k = n - static_cast<int>(must.size());
  std::optional<double> best;
  std::vector<int> pick;
  auto try_point = [&](const std::vector<int>& sel) {
    Eigen::MatrixXd A(must.size() + sel.size(), n);
    Eigen::VectorXd b(must.size() + sel.size());
    int r = 0;
    for (const auto& h : must) {
      A.row(r) = h.a.transpose();
      b[r++] = h.b;
    }
    for (int i : sel) {
      A.row(r) = planes[i].a.transpose();
      b[r++] = planes[i].b;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    if (cod.rank() < n) return;
    Eigen::VectorXd x = cod.solve(b);
    if ((A * x - b).lpNorm<Eigen::Infinity>() > 1e-9) return;
    if (!feasible(x)) return;
    const double v = lp.objective.dot(x);
    if (!best || v < *best) best = v;
  };
  std::function<void(int, int)> rec = [&](int start, int need) {
    if (need == 0) {
      try_point(pick);
      return;
    }
    for (int i = start; i <= static_cast<int>(planes.size()) - need; ++i) {
      pick.push_back(i);
      rec(i + 1, need - 1);
      pick.pop_back();
    }
  };
  if (k < 0) return std::nullopt;
  rec(0, k);
  return best;
}

}  // namespace test_oracle
