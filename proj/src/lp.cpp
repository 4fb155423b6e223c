#include "treedual/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace treedual::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// How each original variable maps into the nonnegative internal columns.
struct VarMap {
  enum Kind { Shifted, Flipped, Split } kind = Split;
  int col = -1;       // primary internal column
  int col_neg = -1;   // negative part for Split
  double offset = 0;  // x = offset + x_col (Shifted), x = offset - x_col (Flipped)
};

struct StandardForm {
  Eigen::MatrixXd A;  // internal rows x internal cols
  Eigen::VectorXd b;  // >= 0
  Eigen::VectorXd c;  // phase-2 costs
  std::vector<VarMap> vars;
  std::vector<double> row_sign;  // sigma: internal row = sigma * substituted row
  std::vector<int> orig_row;     // original row index, -1 for internal bound rows
  std::vector<int> slack_col;    // slack column per internal row, -1 for Equal
  int num_structural = 0;        // columns excluding artificials
  std::vector<int> artificial_of_row;  // -1 when the slack seeds the basis
};

StandardForm build_standard_form(const LinearProgram& lp) {
  const int n = lp.num_vars();
  StandardForm sf;
  sf.vars.resize(n);

  struct PendingRow {
    Eigen::VectorXd coeffs;  // over internal structural columns, filled later
    double rhs;
    Sense sense;
    int orig;
  };

  // First pass: assign internal columns.
  int cols = 0;
  std::vector<std::pair<int, double>> cap_rows;  // (internal col, cap) for two-sided vars
  for (int j = 0; j < n; ++j) {
    VarBounds vb = j < static_cast<int>(lp.bounds.size()) ? lp.bounds[j] : VarBounds{};
    VarMap& vm = sf.vars[j];
    if (vb.lower) {
      vm.kind = VarMap::Shifted;
      vm.col = cols++;
      vm.offset = *vb.lower;
      if (vb.upper) cap_rows.emplace_back(vm.col, *vb.upper - *vb.lower);
    } else if (vb.upper) {
      vm.kind = VarMap::Flipped;
      vm.col = cols++;
      vm.offset = *vb.upper;
    } else {
      vm.kind = VarMap::Split;
      vm.col = cols++;
      vm.col_neg = cols++;
    }
  }

  const int m = lp.num_rows();
  const int num_rows_total = m + static_cast<int>(cap_rows.size());

  // Count slacks.
  int slacks = 0;
  for (const Row& r : lp.rows)
    if (r.sense == Sense::LessEqual) ++slacks;
  slacks += static_cast<int>(cap_rows.size());

  sf.num_structural = cols + slacks;
  sf.A = Eigen::MatrixXd::Zero(num_rows_total, sf.num_structural);
  sf.b = Eigen::VectorXd::Zero(num_rows_total);
  sf.c = Eigen::VectorXd::Zero(sf.num_structural);
  sf.row_sign.assign(num_rows_total, 1.0);
  sf.orig_row.assign(num_rows_total, -1);
  sf.slack_col.assign(num_rows_total, -1);

  // Objective under substitution.
  for (int j = 0; j < n; ++j) {
    const VarMap& vm = sf.vars[j];
    const double cj = lp.objective[j];
    switch (vm.kind) {
      case VarMap::Shifted: sf.c[vm.col] += cj; break;
      case VarMap::Flipped: sf.c[vm.col] -= cj; break;
      case VarMap::Split:
        sf.c[vm.col] += cj;
        sf.c[vm.col_neg] -= cj;
        break;
    }
  }

  int next_slack = cols;
  auto emit_row = [&](int ir, const Eigen::VectorXd& orig_coeffs, double rhs, Sense sense,
                      int orig_index) {
    // Substitute variables.
    Eigen::VectorXd row = Eigen::VectorXd::Zero(sf.num_structural);
    double r = rhs;
    for (int j = 0; j < n; ++j) {
      const double g = orig_coeffs[j];
      if (g == 0.0) continue;
      const VarMap& vm = sf.vars[j];
      switch (vm.kind) {
        case VarMap::Shifted:
          row[vm.col] += g;
          r -= g * vm.offset;
          break;
        case VarMap::Flipped:
          row[vm.col] -= g;
          r -= g * vm.offset;
          break;
        case VarMap::Split:
          row[vm.col] += g;
          row[vm.col_neg] -= g;
          break;
      }
    }
    if (sense == Sense::LessEqual) {
      sf.slack_col[ir] = next_slack;
      row[next_slack++] = 1.0;
    }
    double sign = 1.0;
    if (r < 0) {
      sign = -1.0;
      row = -row;
      r = -r;
    }
    sf.A.row(ir) = row;
    sf.b[ir] = r;
    sf.row_sign[ir] = sign;
    sf.orig_row[ir] = orig_index;
  };

  for (int i = 0; i < m; ++i)
    emit_row(i, lp.rows[i].coeffs, lp.rows[i].rhs, lp.rows[i].sense, i);
  for (size_t k = 0; k < cap_rows.size(); ++k) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(sf.num_structural);
    int ir = m + static_cast<int>(k);
    // x_col <= cap, already in internal coordinates.
    double cap = cap_rows[k].second;
    sf.slack_col[ir] = next_slack;
    row[cap_rows[k].first] = 1.0;
    row[next_slack++] = 1.0;
    double sign = 1.0;
    if (cap < 0) {  // empty box; keep the row, phase 1 will flag it
      sign = -1.0;
      row = -row;
      cap = -cap;
    }
    sf.A.row(ir) = row;
    sf.b[ir] = cap;
    sf.row_sign[ir] = sign;
  }

  sf.artificial_of_row.assign(num_rows_total, -1);
  return sf;
}

// One simplex phase with Bland's rule.  `banned[j]` columns never enter.
// Returns false when an unbounded direction is found (entering column in
// *unbounded_col).
struct PhaseResult {
  bool unbounded = false;
  int unbounded_col = -1;
  int iterations = 0;
};

PhaseResult run_simplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& cost, std::vector<int>& basis,
                        const std::vector<char>& banned, const Tolerances& tol,
                        Eigen::VectorXd* x_basic_out, Eigen::VectorXd* y_out) {
  const int nrows = static_cast<int>(A.rows());
  const int ncols = static_cast<int>(A.cols());
  PhaseResult res;
  const int max_iter = 20000 + 200 * (nrows + ncols);

  std::vector<char> in_basis(ncols, 0);
  for (int i : basis) in_basis[i] = 1;

  Eigen::MatrixXd B(nrows, nrows);
  for (int iter = 0;; ++iter) {
    if (iter > max_iter)
      throw SolverError("simplex iteration limit exceeded (numerical failure)");
    res.iterations = iter;
    for (int i = 0; i < nrows; ++i) B.col(i) = A.col(basis[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    Eigen::VectorXd xB = lu.solve(b);
    Eigen::VectorXd cB(nrows);
    for (int i = 0; i < nrows; ++i) cB[i] = cost[basis[i]];
    Eigen::VectorXd y = lu.transpose().solve(cB);

    // Bland: smallest-index column with negative reduced cost.
    int enter = -1;
    for (int j = 0; j < ncols; ++j) {
      if (in_basis[j] || banned[j]) continue;
      const double d = cost[j] - y.dot(A.col(j));
      if (d < -tol.pivot) {
        enter = j;
        break;
      }
    }
    if (enter < 0) {
      if (x_basic_out) *x_basic_out = xB;
      if (y_out) *y_out = y;
      return res;
    }

    Eigen::VectorXd w = lu.solve(A.col(enter));
    int leave_pos = -1;
    double best_ratio = kInf;
    for (int i = 0; i < nrows; ++i) {
      if (w[i] > tol.pivot) {
        const double ratio = std::max(xB[i], 0.0) / w[i];
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 &&
             (leave_pos < 0 || basis[i] < basis[leave_pos]))) {
          best_ratio = ratio;
          leave_pos = i;
        }
      }
    }
    if (leave_pos < 0) {
      res.unbounded = true;
      res.unbounded_col = enter;
      if (x_basic_out) *x_basic_out = xB;
      if (y_out) *y_out = y;
      return res;
    }
    in_basis[basis[leave_pos]] = 0;
    in_basis[enter] = 1;
    basis[leave_pos] = enter;
  }
}

Eigen::VectorXd recover_x(const StandardForm& sf, const Eigen::VectorXd& xhat, int n) {
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) {
    const VarMap& vm = sf.vars[j];
    switch (vm.kind) {
      case VarMap::Shifted: x[j] = vm.offset + xhat[vm.col]; break;
      case VarMap::Flipped: x[j] = vm.offset - xhat[vm.col]; break;
      case VarMap::Split: x[j] = xhat[vm.col] - xhat[vm.col_neg]; break;
    }
  }
  return x;
}

Eigen::VectorXd recover_direction(const StandardForm& sf, const Eigen::VectorXd& dhat,
                                  int n) {
  Eigen::VectorXd r(n);
  for (int j = 0; j < n; ++j) {
    const VarMap& vm = sf.vars[j];
    switch (vm.kind) {
      case VarMap::Shifted: r[j] = dhat[vm.col]; break;
      case VarMap::Flipped: r[j] = -dhat[vm.col]; break;
      case VarMap::Split: r[j] = dhat[vm.col] - dhat[vm.col_neg]; break;
    }
  }
  return r;
}

Eigen::VectorXd map_duals(const StandardForm& sf, const Eigen::VectorXd& y_internal,
                          int num_orig_rows) {
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(num_orig_rows);
  for (int ir = 0; ir < static_cast<int>(sf.orig_row.size()); ++ir) {
    if (sf.orig_row[ir] >= 0)
      dual[sf.orig_row[ir]] = -sf.row_sign[ir] * y_internal[ir];
  }
  return dual;
}

}  // namespace

int LinearProgram::add_variable(double cost, std::optional<double> lower,
                                std::optional<double> upper) {
  const int j = num_vars();
  objective.conservativeResize(j + 1);
  objective[j] = cost;
  bounds.push_back({lower, upper});
  for (Row& r : rows) {
    r.coeffs.conservativeResize(j + 1);
    r.coeffs[j] = 0.0;
  }
  return j;
}

void LinearProgram::add_row(const Eigen::VectorXd& coeffs, Sense sense, double rhs) {
  if (coeffs.size() != objective.size())
    throw std::invalid_argument("lp row dimension mismatch");
  rows.push_back({coeffs, rhs, sense});
}

void LinearProgram::check_dimensions() const {
  for (const Row& r : rows)
    if (r.coeffs.size() != objective.size())
      throw std::invalid_argument("lp row dimension mismatch");
  if (!bounds.empty() && static_cast<int>(bounds.size()) != num_vars())
    throw std::invalid_argument("lp bounds size mismatch");
  for (const VarBounds& vb : bounds)
    if (vb.lower && vb.upper && *vb.lower > *vb.upper + 1e-12)
      throw std::invalid_argument("lp variable bounds cross");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

LPSolution solve(const LinearProgram& lp, const Tolerances& tol) {
  lp.check_dimensions();
  const int n = lp.num_vars();
  const int m = lp.num_rows();

  StandardForm sf = build_standard_form(lp);
  int nrows = static_cast<int>(sf.A.rows());

  // Phase 1: seed with slacks where their sign allows, artificials elsewhere.
  std::vector<int> basis(nrows, -1);
  std::vector<int> artif_cols;
  int total_cols = sf.num_structural;
  for (int i = 0; i < nrows; ++i) {
    if (sf.slack_col[i] >= 0 && sf.A(i, sf.slack_col[i]) > 0.5)
      basis[i] = sf.slack_col[i];
  }
  int n_artif = 0;
  for (int i = 0; i < nrows; ++i)
    if (basis[i] < 0) ++n_artif;
  Eigen::MatrixXd A1(nrows, sf.num_structural + n_artif);
  A1.leftCols(sf.num_structural) = sf.A;
  A1.rightCols(n_artif).setZero();
  {
    int k = 0;
    for (int i = 0; i < nrows; ++i) {
      if (basis[i] < 0) {
        const int col = sf.num_structural + k;
        A1(i, col) = 1.0;
        basis[i] = col;
        sf.artificial_of_row[i] = col;
        artif_cols.push_back(col);
        ++k;
      }
    }
    total_cols += n_artif;
  }

  Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(total_cols);
  for (int c : artif_cols) cost1[c] = 1.0;
  std::vector<char> banned(total_cols, 0);

  Eigen::VectorXd xB, y;
  PhaseResult p1 = run_simplex(A1, sf.b, cost1, basis, banned, tol, &xB, &y);
  if (p1.unbounded) throw SolverError("phase-1 unbounded (numerical failure)");

  double phase1_value = 0.0;
  for (int i = 0; i < nrows; ++i)
    if (cost1[basis[i]] > 0) phase1_value += xB[i];

  LPSolution sol;
  sol.iterations = p1.iterations;
  if (phase1_value > tol.feasibility) {
    sol.status = SolveStatus::Infeasible;
    sol.certificate = map_duals(sf, y, m);  // phase-1 dual: b'y > 0, A'y <= 0 on real columns
    return sol;
  }

  // Drive artificials out of the basis; drop rows that turn out redundant.
  {
    Eigen::MatrixXd B(nrows, nrows);
    for (int i = 0; i < nrows; ++i) B.col(i) = A1.col(basis[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    std::vector<char> in_basis(total_cols, 0);
    for (int c : basis) in_basis[c] = 1;
    std::vector<int> drop_rows;
    for (int i = 0; i < nrows; ++i) {
      if (cost1[basis[i]] == 0.0) continue;  // structural
      Eigen::VectorXd e = Eigen::VectorXd::Zero(nrows);
      e[i] = 1.0;
      Eigen::VectorXd brow = lu.transpose().solve(e);
      int pivot_col = -1;
      for (int j = 0; j < sf.num_structural; ++j) {
        if (in_basis[j]) continue;
        if (std::abs(brow.dot(A1.col(j))) > 1e-8) {
          pivot_col = j;
          break;
        }
      }
      if (pivot_col >= 0) {
        in_basis[basis[i]] = 0;
        in_basis[pivot_col] = 1;
        basis[i] = pivot_col;
        for (int k = 0; k < nrows; ++k) B.col(k) = A1.col(basis[k]);
        lu.compute(B);
      } else {
        drop_rows.push_back(i);
      }
    }
    if (!drop_rows.empty()) {
      std::vector<char> dropped(nrows, 0);
      for (int i : drop_rows) dropped[i] = 1;
      const int keep = nrows - static_cast<int>(drop_rows.size());
      Eigen::MatrixXd A2(keep, total_cols);
      Eigen::VectorXd b2(keep);
      std::vector<int> basis2;
      std::vector<double> sign2;
      std::vector<int> orig2, slack2, artif2;
      int r = 0;
      for (int i = 0; i < nrows; ++i) {
        if (dropped[i]) continue;
        A2.row(r) = A1.row(i);
        b2[r] = sf.b[i];
        basis2.push_back(basis[i]);
        sign2.push_back(sf.row_sign[i]);
        orig2.push_back(sf.orig_row[i]);
        slack2.push_back(sf.slack_col[i]);
        artif2.push_back(sf.artificial_of_row[i]);
        ++r;
      }
      A1 = A2;
      sf.b = b2;
      basis = basis2;
      sf.row_sign = sign2;
      sf.orig_row = orig2;
      sf.slack_col = slack2;
      sf.artificial_of_row = artif2;
      nrows = keep;
    }
  }

  // Phase 2.
  Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(total_cols);
  cost2.head(sf.num_structural) = sf.c;
  for (int c : artif_cols) banned[c] = 1;

  PhaseResult p2 = run_simplex(A1, sf.b, cost2, basis, banned, tol, &xB, &y);
  sol.iterations += p2.iterations;

  if (p2.unbounded) {
    sol.status = SolveStatus::Unbounded;
    Eigen::MatrixXd B(nrows, nrows);
    for (int i = 0; i < nrows; ++i) B.col(i) = A1.col(basis[i]);
    Eigen::VectorXd w = B.partialPivLu().solve(A1.col(p2.unbounded_col));
    Eigen::VectorXd dhat = Eigen::VectorXd::Zero(total_cols);
    dhat[p2.unbounded_col] = 1.0;
    for (int i = 0; i < nrows; ++i) dhat[basis[i]] = -w[i];
    sol.certificate = recover_direction(sf, dhat, n);
    return sol;
  }

  Eigen::VectorXd xhat = Eigen::VectorXd::Zero(total_cols);
  for (int i = 0; i < nrows; ++i) xhat[basis[i]] = std::max(xB[i], 0.0);
  sol.status = SolveStatus::Optimal;
  sol.x = recover_x(sf, xhat, n);
  sol.dual = map_duals(sf, y, m);
  sol.objective_value = lp.objective.dot(sol.x);
  return sol;
}

VerifyReport verify(const LinearProgram& lp, const LPSolution& sol, double tol) {
  VerifyReport rep;
  if (sol.status != SolveStatus::Optimal) return rep;
  const int n = lp.num_vars();
  const int m = lp.num_rows();
  const Eigen::VectorXd& x = sol.x;
  const Eigen::VectorXd& dual = sol.dual;

  // Primal feasibility (rows and bounds).
  double pviol = 0.0;
  for (const Row& r : lp.rows) {
    const double ax = r.coeffs.dot(x);
    const double scale = std::max(1.0, std::abs(r.rhs));
    if (r.sense == Sense::LessEqual)
      pviol = std::max(pviol, (ax - r.rhs) / scale);
    else
      pviol = std::max(pviol, std::abs(ax - r.rhs) / scale);
  }
  for (int j = 0; j < n && j < static_cast<int>(lp.bounds.size()); ++j) {
    const VarBounds& vb = lp.bounds[j];
    if (vb.lower) pviol = std::max(pviol, (*vb.lower - x[j]) / std::max(1.0, std::abs(*vb.lower)));
    if (vb.upper) pviol = std::max(pviol, (x[j] - *vb.upper) / std::max(1.0, std::abs(*vb.upper)));
  }
  rep.max_primal_violation = pviol;
  rep.primal_feasible = pviol <= tol;

  // Dual feasibility: multiplier signs plus stationarity of the reduced costs
  // against the active bounds.
  double dviol = 0.0;
  for (int i = 0; i < m; ++i)
    if (lp.rows[i].sense == Sense::LessEqual) dviol = std::max(dviol, -dual[i]);
  Eigen::VectorXd d = lp.objective;
  for (int i = 0; i < m; ++i) d += dual[i] * lp.rows[i].coeffs;
  const double act_tol = 1e-6;
  for (int j = 0; j < n; ++j) {
    VarBounds vb = j < static_cast<int>(lp.bounds.size()) ? lp.bounds[j] : VarBounds{};
    const bool at_lower = vb.lower && x[j] <= *vb.lower + act_tol * std::max(1.0, std::abs(*vb.lower));
    const bool at_upper = vb.upper && x[j] >= *vb.upper - act_tol * std::max(1.0, std::abs(*vb.upper));
    if (at_lower && at_upper) continue;
    if (at_lower)
      dviol = std::max(dviol, -d[j]);
    else if (at_upper)
      dviol = std::max(dviol, d[j]);
    else
      dviol = std::max(dviol, std::abs(d[j]));
  }
  rep.max_dual_violation = dviol;
  rep.dual_feasible = dviol <= tol;

  // Complementary slackness on inequality rows.
  double cviol = 0.0;
  for (int i = 0; i < m; ++i) {
    if (lp.rows[i].sense != Sense::LessEqual) continue;
    const double slack = lp.rows[i].rhs - lp.rows[i].coeffs.dot(x);
    cviol = std::max(cviol, std::abs(dual[i] * slack) /
                                std::max(1.0, std::abs(lp.rows[i].rhs)));
  }
  rep.max_complementarity_violation = cviol;
  rep.complementary = cviol <= tol;

  // Dual objective: -sum dual_i h_i plus the bound terms implied by the
  // reduced costs.
  double dual_obj = 0.0;
  for (int i = 0; i < m; ++i) dual_obj -= dual[i] * lp.rows[i].rhs;
  bool bounds_ok = true;
  for (int j = 0; j < n; ++j) {
    VarBounds vb = j < static_cast<int>(lp.bounds.size()) ? lp.bounds[j] : VarBounds{};
    if (d[j] > tol) {
      if (vb.lower)
        dual_obj += d[j] * *vb.lower;
      else
        bounds_ok = false;
    } else if (d[j] < -tol) {
      if (vb.upper)
        dual_obj += d[j] * *vb.upper;
      else
        bounds_ok = false;
    }
  }
  rep.dual_objective_value = dual_obj;
  const double primal_obj = lp.objective.dot(x);
  rep.objective_gap = std::abs(primal_obj - dual_obj) / std::max(1.0, std::abs(primal_obj));
  rep.objectives_match = bounds_ok && rep.objective_gap <= tol * 10;
  return rep;
}

bool check_farkas_certificate(const LinearProgram& lp, const Eigen::VectorXd& mult,
                              double tol) {
  const int n = lp.num_vars();
  const int m = lp.num_rows();
  if (mult.size() != m) return false;
  for (int j = 0; j < n && j < static_cast<int>(lp.bounds.size()); ++j) {
    const VarBounds& vb = lp.bounds[j];
    if (vb.lower && vb.upper && *vb.lower > *vb.upper + tol) return true;  // empty box
  }
  for (int i = 0; i < m; ++i)
    if (lp.rows[i].sense == Sense::LessEqual && mult[i] < -tol) return false;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  double rhs = 0.0;
  for (int i = 0; i < m; ++i) {
    w += mult[i] * lp.rows[i].coeffs;
    rhs += mult[i] * lp.rows[i].rhs;
  }
  double lo = 0.0;
  for (int j = 0; j < n; ++j) {
    VarBounds vb = j < static_cast<int>(lp.bounds.size()) ? lp.bounds[j] : VarBounds{};
    if (std::abs(w[j]) <= tol) continue;
    if (w[j] > 0) {
      if (!vb.lower) return false;
      lo += w[j] * *vb.lower;
    } else {
      if (!vb.upper) return false;
      lo += w[j] * *vb.upper;
    }
  }
  return lo - rhs > tol;
}

bool check_unbounded_certificate(const LinearProgram& lp, const Eigen::VectorXd& ray,
                                 double tol) {
  const int n = lp.num_vars();
  if (ray.size() != n) return false;
  const double scale = std::max(1.0, ray.lpNorm<Eigen::Infinity>());
  if (lp.objective.dot(ray) >= -tol * scale) return false;
  for (const Row& r : lp.rows) {
    const double ar = r.coeffs.dot(ray);
    if (r.sense == Sense::LessEqual ? ar > tol * scale : std::abs(ar) > tol * scale)
      return false;
  }
  for (int j = 0; j < n && j < static_cast<int>(lp.bounds.size()); ++j) {
    const VarBounds& vb = lp.bounds[j];
    if (vb.lower && ray[j] < -tol * scale) return false;
    if (vb.upper && ray[j] > tol * scale) return false;
  }
  return true;
}

}  // namespace treedual::lp
