#pragma once

#include <cstdint>
#include <map>

#include "treedual/lp.hpp"
#include "treedual/scenario_tree.hpp"

namespace treedual::stopping {

// Optimal stopping of a nonnegative scalar reward process: maximize
// E sum_t x_t Z_t over adapted x with sum_t x_t <= 1 along every path.
struct StoppingProblem {
  TreePtr tree;
  AdaptedProcess reward;

  void validate() const;  // scalar, all stages, Z >= 0
};

// Backward induction V_T = Z_T, V_t = max(Z_t, E_t V_{t+1}); the root value
// is the optimal stopping value.  Independent of the LP route.
AdaptedProcess snell_envelope(const StoppingProblem& sp);

struct StoppingSolution {
  double value = 0.0;
  AdaptedProcess relaxed;                 // x* in [0,1], sum <= 1 per path
  std::map<NodeId, bool> stop;            // earliest node with Z = V
  AdaptedProcess dual_martingale;         // y >= Z, E y_0 = value
  lp::VerifyReport lp_check;
};

// Relaxed LP over node-indexed x with one budget row per scenario; the
// budget multipliers scaled by 1/P(leaf) are the terminal values of the
// dual martingale.
StoppingSolution solve_stopping_lp(const StoppingProblem& sp);

// U(y) = E max_t (Z_t - y_t + y_0) for a martingale y: an upper bound on
// the stopping value, tight at the Doob martingale part of the Snell
// envelope.  Exact evaluation by path enumeration.
double rogers_bound(const StoppingProblem& sp, const AdaptedProcess& y);

struct MonteCarloBound {
  double estimate = 0.0;
  double std_error = 0.0;
  int paths = 0;
  std::uint64_t seed = 0;
};

// Path-sampled estimate of rogers_bound; deterministic for a given seed.
MonteCarloBound rogers_bound_mc(const StoppingProblem& sp, const AdaptedProcess& y,
                                int paths, std::uint64_t seed);

// M_0 = V_0, dM_{t+1} = V_{t+1} - E_t V_{t+1}; for a supermartingale V the
// drift V - M is nonincreasing along paths.
AdaptedProcess doob_martingale_part(const AdaptedProcess& V);

}  // namespace treedual::stopping
