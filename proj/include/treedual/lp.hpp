#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace treedual::lp {

// All programs are minimization problems.  Multiplier convention: the
// Lagrangian is c'x + sum_i y_i (g_i'x - h_i), so duals of LessEqual rows
// are >= 0 and duals of Equal rows are free.
enum class Sense { LessEqual, Equal };

struct Row {
  Eigen::VectorXd coeffs;
  double rhs = 0.0;
  Sense sense = Sense::LessEqual;
};

struct VarBounds {
  std::optional<double> lower;
  std::optional<double> upper;
};

struct LinearProgram {
  Eigen::VectorXd objective;
  std::vector<Row> rows;
  std::vector<VarBounds> bounds;  // empty entry (or missing) = free variable

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  int add_variable(double cost, std::optional<double> lower = std::nullopt,
                   std::optional<double> upper = std::nullopt);
  void add_row(const Eigen::VectorXd& coeffs, Sense sense, double rhs);
  void check_dimensions() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded };

std::string to_string(SolveStatus s);

struct LPSolution {
  SolveStatus status = SolveStatus::Optimal;
  Eigen::VectorXd x;     // primal point when Optimal
  Eigen::VectorXd dual;  // one multiplier per row when Optimal
  double objective_value = 0.0;
  // Unbounded: an improving ray in the original variable space.
  // Infeasible: Farkas row multipliers (>= 0 on LessEqual rows) proving
  // that no point within the variable bounds satisfies all rows.
  Eigen::VectorXd certificate;
  int iterations = 0;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Tolerances {
  double pivot = 1e-10;
  double feasibility = 1e-8;
};

// Two-phase revised simplex with Bland's rule (dense factorizations).
// Deterministic for a given input.
LPSolution solve(const LinearProgram& lp, const Tolerances& tol = {});

struct VerifyReport {
  bool primal_feasible = false;
  bool dual_feasible = false;
  bool complementary = false;
  bool objectives_match = false;
  double max_primal_violation = 0.0;
  double max_dual_violation = 0.0;
  double max_complementarity_violation = 0.0;
  double objective_gap = 0.0;
  double dual_objective_value = 0.0;

  bool ok() const {
    return primal_feasible && dual_feasible && complementary && objectives_match;
  }
};

// Independent re-check of an Optimal solution: feasibility, multiplier
// signs, stationarity against bounds, complementary slackness and the
// primal/dual objective match.  Does not reuse solver internals.
VerifyReport verify(const LinearProgram& lp, const LPSolution& sol, double tol);

// True when `mult` proves infeasibility of `lp`: with w = sum_i mult_i g_i,
// inf over the bound box of w'x exceeds sum_i mult_i h_i.
bool check_farkas_certificate(const LinearProgram& lp, const Eigen::VectorXd& mult,
                              double tol);

// True when `ray` proves unboundedness: feasible direction with negative cost.
bool check_unbounded_certificate(const LinearProgram& lp, const Eigen::VectorXd& ray,
                                 double tol);

}  // namespace treedual::lp
