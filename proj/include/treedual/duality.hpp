#pragma once

#include <map>
#include <optional>
#include <string>

#include "treedual/lp.hpp"
#include "treedual/polyconvex.hpp"
#include "treedual/scenario_tree.hpp"

namespace treedual::duality {

// One node's integrand: a polyhedral function of the decision history
// (x_0,...,x_t along the node's path) followed by the parameter slices u_s
// for the listed times.  Each parameter time may be consumed by at most one
// node per scenario path; that is the time-separable structure which makes
// the Lagrangian decompose node by node.
struct NodeObjective {
  polyconvex::PolyhedralFunction f;
  std::vector<int> u_times;  // strictly increasing, each <= the node's stage
};

// Tree-based convex stochastic program
//
//   minimize  E sum_nodes f_node(x-history, consumed u-slices)  over adapted x.
//
// Parameters may be non-adapted: component s of the parameter process
// carries its own measurability stage >= s.
struct StochasticProgram {
  TreePtr tree;
  std::vector<int> stage_dims;  // n_t, may be 0
  std::vector<int> param_dims;  // m_t, may be 0
  std::map<NodeId, NodeObjective> node_objectives;
  GeneralProcess parameter;  // one component per time t with m_t > 0

  // Attach f at a node; by default it consumes the node's own-time slice
  // (when m_t > 0) after the decision history.
  void attach(NodeId node, polyconvex::PolyhedralFunction f);
  void attach(NodeId node, polyconvex::PolyhedralFunction f, std::vector<int> u_times);

  void validate() const;
  int history_dim(int stage) const;  // n_0 + ... + n_stage
  int consumed_param_dim(NodeId node) const;
};

enum class DualClass { Full, Martingale, Orthogonal };

DualClass dual_class_from_string(const std::string& s);
std::string to_string(DualClass c);

struct PrimalResult {
  lp::SolveStatus status = lp::SolveStatus::Optimal;
  double value = 0.0;  // +inf infeasible, -inf unbounded
  std::optional<AdaptedProcess> solution;
  GeneralProcess multipliers;  // y from the parameter rows, 1/P(node)-scaled
  lp::VerifyReport lp_check;
};

// phi(u): one LP over node-indexed decisions (adaptedness is the variable
// indexing) with the parameters entering as fixed variables so their row
// multipliers expose the dual.
PrimalResult solve_primal(const StochasticProgram& sp);

// l(., y) at one node: exact polyhedral partial minimization over the
// node's parameter slices for a fixed dual vector y (concatenated slices).
polyconvex::PartialInfResult lagrangian_integrand(const StochasticProgram& sp,
                                                  NodeId node,
                                                  const Eigen::VectorXd& y);

// g(y) = inf over adapted x of E l(x, y): assembled from the per-node
// partial minimizations; returns -inf when the inner problem is unbounded.
double dual_objective(const StochasticProgram& sp, const GeneralProcess& y);

struct GapReport {
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;  // primal - dual, >= -tol by weak duality
  std::optional<AdaptedProcess> primal_solution;
  GeneralProcess dual_solution;
  std::map<std::string, std::string> statuses;
  bool gap_within_tolerance = false;
  double relative_gap_tolerance = 1e-6;
};

// Primal by solve_primal, dual candidate from the LP multipliers
// (transformed per `dual_class`), then g(y) re-evaluated independently via
// dual_objective.  Zero gap on feasible bounded polyhedral instances.
GapReport duality_gap(const StochasticProgram& sp, DualClass dual_class = DualClass::Full);

// Information-relaxation lower bound: for y orthogonal to the adapted
// processes, averages the scenario-wise unconstrained minima of
// f-terms(x) - sum_t x_t . y_t over whole trajectories.
double shadow_price_bound(const StochasticProgram& sp, const GeneralProcess& y);

// g(y) = -E sum_t L_t*(E_t dy_{t+1}, y_t) with y_{T+1} := 0, for Bolza
// problems with per-node integrands L_t(x, dx).
double bolza_dual_value(const TreePtr& tree,
                        const std::map<NodeId, polyconvex::PolyhedralFunction>& lagrangians,
                        const AdaptedProcess& y);

}  // namespace treedual::duality
