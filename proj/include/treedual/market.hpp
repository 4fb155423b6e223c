#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treedual/duality.hpp"
#include "treedual/polyconvex.hpp"
#include "treedual/scenario_tree.hpp"

namespace treedual::market {

// Market over d assets described per node by two convex polyhedral sets:
// C (portfolios freely available, 0 in C) and D (admissible holdings,
// 0 in D; absent means R^d).  Terminal-stage holdings are forced to zero
// inside every construction, whatever D says there.
struct MarketModel {
  TreePtr tree;
  int assets = 0;
  std::map<NodeId, polyconvex::Polyhedron> C;
  std::map<NodeId, polyconvex::Polyhedron> D;  // absent node = no constraint
  bool conical = false;
  // Set by the liquid constructor: asset prices in units of asset 0.
  std::optional<AdaptedProcess> liquid_prices;

  // Perfectly liquid model: C = {x | x_0 + s.x_rest <= 0}, D = R^d.
  static MarketModel liquid(TreePtr tree, const AdaptedProcess& prices);
  // Cash-delivery sugar: C = {(z0, z) | z0 + S(z) <= 0} from per-node
  // polyhedral cost functions S on R^{d-1}.
  static MarketModel from_cost_functions(
      TreePtr tree, int assets,
      const std::map<NodeId, polyconvex::PolyhedralFunction>& cost);

  const polyconvex::Polyhedron& cone_C(NodeId n) const;
  polyconvex::Polyhedron holdings_D(NodeId n) const;  // {0} at the horizon

  // Errors for structural violations (0 not in C/D); returns warnings
  // (terminal D ignored, etc.).
  std::vector<std::string> validate() const;
};

// Node-wise check of dx_t + u_t in C_t, x_t in D_t, x_T = 0 (x_{-1} = 0).
bool superhedges(const MarketModel& model, const AdaptedProcess& x,
                 const AdaptedProcess& u, double tol = 1e-8);

// inf{ alpha | u - alpha p superhedgeable at zero cost } together with the
// dual bound sup { E sum u.y - E sum [sigma_D(E_t dy) + sigma_C(y)] } over
// price systems normalized by E sum p.y = 1.  Rejects freely available
// premiums (phi(0) = -inf).
duality::GapReport superhedge_cost(const MarketModel& model, const AdaptedProcess& u,
                                   const AdaptedProcess& p);

// LP search for a consistent price system: y_t in C*_t and E_t dy_{t+1} in
// D*_t node-wise.  strict demands componentwise y >= 1e-6 after scaling the
// root cash coordinate to 1 (finite-tree stand-in for Kreps-Yan); requires
// a conical model.
std::optional<AdaptedProcess> find_consistent_price_system(const MarketModel& model,
                                                           bool strict);

// Membership test against the generator rows of C and D (conical models).
bool is_consistent_price_system(const MarketModel& model, const AdaptedProcess& y,
                                double tol = 1e-8);

struct ArbitrageReport {
  bool no_arbitrage = false;
  // when arbitrage exists: the claim found and its zero-cost hedge
  std::optional<AdaptedProcess> claim;
  std::optional<AdaptedProcess> hedge;
  // for conical arbitrage-free models: the strictly positive price system
  std::optional<AdaptedProcess> strict_system;
};

// Maximizes E[u_t^i] over nonnegative claims u <= 1 superhedgeable at zero
// cost, per stage and coordinate; arbitrage iff any maximum is positive.
ArbitrageReport check_no_arbitrage(const MarketModel& model, double tol = 1e-7);

struct FtapReport {
  bool no_arbitrage = false;
  bool martingale_measure_exists = false;
  bool agree = false;
  std::map<NodeId, double> leaf_measure;  // Q per leaf when it exists
  double max_martingale_violation = 0.0;  // node-wise E^Q check on prices
};

// Runs both sides of the fundamental theorem on a perfectly liquid model
// with strictly positive prices and reports the extracted measure.
FtapReport ftap_equivalence(const MarketModel& model);

// maximize E sum U_t(c_t) subject to dx_t + c_t - e_t in C_t, x_t in D_t,
// x_T = 0.  Utilities are passed as convex -U; endowment e defaults to 0.
// The dual bound is inf over consistent price systems of
// E sum [e_t.y_t - U*_t(y_t)] with the concave conjugate
// U*(y) = inf_c {c.y - U(c)}; gap = dual - primal >= -tol.
duality::GapReport optimal_consumption(
    const MarketModel& model,
    const std::map<NodeId, polyconvex::PolyhedralFunction>& neg_utility,
    const std::optional<AdaptedProcess>& endowment = std::nullopt);

// True when the adapted solutions of the recession system
// {dx in C^inf, x in D^inf, x_T = 0} form a linear space: no inequality
// row of the system can be made strictly slack (LP per row).
bool recession_linearity_check(const MarketModel& model, double tol = 1e-7);

}  // namespace treedual::market
