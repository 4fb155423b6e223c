#include "treedual/market.hpp"

#include <algorithm>
#include <cmath>

namespace treedual::market {

namespace {

using Eigen::VectorXd;
using polyconvex::kMinusInf;
using polyconvex::kPlusInf;
using polyconvex::Polyhedron;
using polyconvex::VRep;

// Variable layout for hedging LPs: one portfolio block per node.
struct Layout {
  std::map<NodeId, int> x_offset;
  int size = 0;
};

Layout portfolio_layout(const MarketModel& m) {
  Layout lay;
  for (NodeId n : m.tree->all_nodes()) {
    lay.x_offset[n] = lay.size;
    lay.size += m.assets;
  }
  return lay;
}

// Coefficient row for g . (dx_n + shift) over the layout (columns beyond
// lay.size untouched).
void scatter_delta(const MarketModel& m, const Layout& lay, NodeId n,
                   const VectorXd& g, VectorXd& row) {
  row.segment(lay.x_offset.at(n), m.assets) += g;
  if (auto p = m.tree->parent(n))
    row.segment(lay.x_offset.at(*p), m.assets) -= g;
}

void add_terminal_zero_rows(const MarketModel& m, const Layout& lay,
                            lp::LinearProgram& prog, int total_vars) {
  for (NodeId n : m.tree->leaves())
    for (int j = 0; j < m.assets; ++j) {
      VectorXd row = VectorXd::Zero(total_vars);
      row[lay.x_offset.at(n) + j] = 1.0;
      prog.add_row(row, lp::Sense::Equal, 0.0);
    }
}

// Membership rows for x_n in D_n at interior stages.
void add_holding_rows(const MarketModel& m, const Layout& lay,
                      lp::LinearProgram& prog, int total_vars) {
  for (NodeId n : m.tree->all_nodes()) {
    if (m.tree->stage(n) == m.tree->horizon()) continue;
    auto it = m.D.find(n);
    if (it == m.D.end()) continue;
    for (const auto& [g, h] : it->second.ineqs) {
      VectorXd row = VectorXd::Zero(total_vars);
      row.segment(lay.x_offset.at(n), m.assets) = g;
      prog.add_row(row, lp::Sense::LessEqual, h);
    }
    for (const auto& [g, h] : it->second.eqs) {
      VectorXd row = VectorXd::Zero(total_vars);
      row.segment(lay.x_offset.at(n), m.assets) = g;
      prog.add_row(row, lp::Sense::Equal, h);
    }
  }
}

AdaptedProcess extract_portfolios(const MarketModel& m, const Layout& lay,
                                  const VectorXd& x) {
  AdaptedProcess out(m.tree, std::vector<int>(m.tree->horizon() + 1, m.assets));
  for (NodeId n : m.tree->all_nodes())
    out.set(n, x.segment(lay.x_offset.at(n), m.assets));
  return out;
}

// dual increment w_n = E_n[y_children] - y_n over a y layout.
void scatter_expected_delta(const MarketModel& m, const Layout& lay, NodeId n,
                            const VectorXd& g, VectorXd& row) {
  row.segment(lay.x_offset.at(n), m.assets) -= g;
  for (NodeId c : m.tree->children(n))
    row.segment(lay.x_offset.at(c), m.assets) += m.tree->cond_prob(c) * g;
}

}  // namespace

MarketModel MarketModel::liquid(TreePtr tree, const AdaptedProcess& prices) {
  MarketModel m;
  m.tree = tree;
  m.assets = prices.dim(0) + 1;
  m.conical = true;
  m.liquid_prices = prices;
  for (NodeId n : tree->all_nodes()) {
    Polyhedron Cn;
    Cn.dim = m.assets;
    VectorXd g(m.assets);
    g[0] = 1.0;
    g.tail(m.assets - 1) = prices.value(n);
    Cn.add_ineq(g, 0.0);
    m.C[n] = std::move(Cn);
  }
  return m;
}

MarketModel MarketModel::from_cost_functions(
    TreePtr tree, int assets,
    const std::map<NodeId, polyconvex::PolyhedralFunction>& cost) {
  MarketModel m;
  m.tree = tree;
  m.assets = assets;
  bool conical = true;
  for (NodeId n : tree->all_nodes()) {
    const auto& S = cost.at(n);
    if (S.dim != assets - 1)
      throw ValidationError("cost function dimension must be assets-1");
    Polyhedron Cn;
    Cn.dim = assets;
    auto lift = [&](const VectorXd& gz, double z0coef) {
      VectorXd g(assets);
      g[0] = z0coef;
      g.tail(assets - 1) = gz;
      return g;
    };
    // z0 + S(z) <= 0 with S = max-affine on a domain
    if (S.pieces.empty()) {
      Cn.add_ineq(lift(VectorXd::Zero(assets - 1), 1.0), 0.0);
    } else {
      for (const auto& [a, b] : S.pieces) {
        Cn.add_ineq(lift(a, 1.0), -b);
        if (b != 0.0) conical = false;
      }
    }
    for (const auto& [g, h] : S.domain.ineqs) {
      Cn.add_ineq(lift(g, 0.0), h);
      if (h != 0.0) conical = false;
    }
    for (const auto& [g, h] : S.domain.eqs) {
      Cn.add_eq(lift(g, 0.0), h);
      if (h != 0.0) conical = false;
    }
    m.C[n] = std::move(Cn);
  }
  m.conical = conical;
  return m;
}

const Polyhedron& MarketModel::cone_C(NodeId n) const {
  auto it = C.find(n);
  if (it == C.end()) throw ValidationError("market missing C at node " + std::to_string(n));
  return it->second;
}

Polyhedron MarketModel::holdings_D(NodeId n) const {
  if (tree->stage(n) == tree->horizon()) {
    Polyhedron zero;
    zero.dim = assets;
    for (int j = 0; j < assets; ++j) {
      VectorXd e = VectorXd::Zero(assets);
      e[j] = 1.0;
      zero.add_eq(e, 0.0);
    }
    return zero;
  }
  auto it = D.find(n);
  if (it != D.end()) return it->second;
  return Polyhedron::whole_space(assets);
}

std::vector<std::string> MarketModel::validate() const {
  if (!tree) throw ValidationError("market without a tree");
  if (assets <= 0) throw ValidationError("market needs at least one asset");
  std::vector<std::string> warnings;
  const VectorXd zero = VectorXd::Zero(assets);
  for (NodeId n : tree->all_nodes()) {
    if (!cone_C(n).contains(zero))
      throw ValidationError("0 must belong to C at node " + std::to_string(n));
    auto it = D.find(n);
    if (it != D.end()) {
      if (it->second.dim != assets)
        throw ValidationError("D dimension mismatch at node " + std::to_string(n));
      if (!it->second.contains(zero))
        throw ValidationError("0 must belong to D at node " + std::to_string(n));
      if (tree->stage(n) == tree->horizon())
        warnings.push_back("terminal D at node " + std::to_string(n) +
                           " is ignored: holdings are forced to 0 at the horizon");
    }
    if (cone_C(n).dim != assets)
      throw ValidationError("C dimension mismatch at node " + std::to_string(n));
  }
  return warnings;
}

bool superhedges(const MarketModel& model, const AdaptedProcess& x,
                 const AdaptedProcess& u, double tol) {
  const ScenarioTree& tree = *model.tree;
  for (int t = 0; t <= tree.horizon(); ++t)
    if (x.dim(t) != model.assets || u.dim(t) != model.assets)
      throw ValidationError("process dimension must equal the asset count");
  for (NodeId n : tree.all_nodes()) {
    VectorXd dx = x.value(n);
    if (auto p = tree.parent(n)) dx -= x.value(*p);
    if (!model.cone_C(n).contains(dx + u.value(n), tol)) return false;
    if (tree.stage(n) == tree.horizon()) {
      if (x.value(n).lpNorm<Eigen::Infinity>() > tol) return false;
    } else if (!model.holdings_D(n).contains(x.value(n), tol)) {
      return false;
    }
  }
  return true;
}

namespace {

// min alpha s.t. dx + u - alpha p in C, x in D, x_T = 0.
lp::LPSolution solve_hedging_lp(const MarketModel& m, const AdaptedProcess& u,
                                const AdaptedProcess& p, Layout& lay) {
  lay = portfolio_layout(m);
  const int alpha_col = lay.size;
  const int nv = lay.size + 1;
  lp::LinearProgram prog;
  prog.objective = VectorXd::Zero(nv);
  prog.objective[alpha_col] = 1.0;
  prog.bounds.resize(nv);
  for (NodeId n : m.tree->all_nodes()) {
    for (const auto& [g, h] : m.cone_C(n).ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(m, lay, n, g, row);
      row[alpha_col] = -g.dot(p.value(n));
      prog.add_row(row, lp::Sense::LessEqual, h - g.dot(u.value(n)));
    }
    for (const auto& [g, h] : m.cone_C(n).eqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(m, lay, n, g, row);
      row[alpha_col] = -g.dot(p.value(n));
      prog.add_row(row, lp::Sense::Equal, h - g.dot(u.value(n)));
    }
  }
  add_holding_rows(m, lay, prog, nv);
  add_terminal_zero_rows(m, lay, prog, nv);
  return lp::solve(prog);
}

struct NodeGenerators {
  VRep C;
  std::optional<VRep> D;  // interior stages with explicit D only
};

std::map<NodeId, NodeGenerators> enumerate_market(const MarketModel& m) {
  std::map<NodeId, NodeGenerators> gen;
  for (NodeId n : m.tree->all_nodes()) {
    NodeGenerators g;
    g.C = polyconvex::enumerate_generators(m.cone_C(n));
    if (m.tree->stage(n) < m.tree->horizon() && m.D.count(n))
      g.D = polyconvex::enumerate_generators(m.D.at(n));
    gen[n] = std::move(g);
  }
  return gen;
}

}  // namespace

duality::GapReport superhedge_cost(const MarketModel& model, const AdaptedProcess& u,
                                   const AdaptedProcess& p) {
  model.validate();
  duality::GapReport rep;
  rep.statuses["orientation"] = "min";

  // Free-premium screen: phi(0) > -infinity.
  {
    Layout lay;
    AdaptedProcess zero =
        AdaptedProcess::constant(model.tree, VectorXd::Zero(model.assets));
    lp::LPSolution probe = solve_hedging_lp(model, zero, p, lay);
    if (probe.status == lp::SolveStatus::Unbounded) {
      rep.statuses["primal"] = "rejected: premium freely available (phi(0) = -inf)";
      rep.primal_value = kMinusInf;
      rep.dual_value = kMinusInf;
      return rep;
    }
  }

  Layout lay;
  lp::LPSolution sol = solve_hedging_lp(model, u, p, lay);
  rep.statuses["primal"] = lp::to_string(sol.status);
  if (sol.status != lp::SolveStatus::Optimal) {
    rep.primal_value = sol.status == lp::SolveStatus::Infeasible ? kPlusInf : kMinusInf;
    rep.dual_value = rep.primal_value;
    return rep;
  }
  rep.primal_value = sol.objective_value;
  rep.primal_solution = extract_portfolios(model, lay, sol.x);

  // Dual: maximize E sum u.y - E sum [sigma_C(y) + sigma_D(E_t dy)] with
  // the normalization E sum p.y = 1.  Support functions enter through the
  // generators of C and D; minus signs convert to a minimization LP.
  const ScenarioTree& tree = *model.tree;
  auto gens = enumerate_market(model);
  Layout ylay = portfolio_layout(model);
  int nv = ylay.size;
  std::map<NodeId, int> c_epi, d_epi;
  for (NodeId n : tree.all_nodes()) {
    c_epi[n] = nv++;
    if (gens.at(n).D) d_epi[n] = nv++;
  }
  lp::LinearProgram dual;
  dual.objective = VectorXd::Zero(nv);
  dual.bounds.resize(nv);
  for (NodeId n : tree.all_nodes()) {
    const double prob = node_probability(tree, n);
    dual.objective.segment(ylay.x_offset.at(n), model.assets) -= prob * u.value(n);
    dual.objective[c_epi.at(n)] = prob;
    if (d_epi.count(n)) dual.objective[d_epi.at(n)] = prob;
  }
  auto add_support_rows = [&](const VRep& gen, NodeId n, bool on_delta, int epi) {
    auto emit = [&](const VectorXd& v, double wcoef, lp::Sense sense, double rhs) {
      VectorXd row = VectorXd::Zero(nv);
      if (on_delta)
        scatter_expected_delta(model, ylay, n, v, row);
      else
        row.segment(ylay.x_offset.at(n), model.assets) = v;
      if (epi >= 0) row[epi] = wcoef;
      dual.add_row(row, sense, rhs);
    };
    for (const auto& v : gen.points) emit(v, -1.0, lp::Sense::LessEqual, 0.0);
    for (const auto& r : gen.rays) emit(r, 0.0, lp::Sense::LessEqual, 0.0);
    for (const auto& l : gen.lines) emit(l, 0.0, lp::Sense::Equal, 0.0);
  };
  // normalization row E sum p.y = 1
  VectorXd norm = VectorXd::Zero(nv);
  for (NodeId n : tree.all_nodes())
    norm.segment(ylay.x_offset.at(n), model.assets) +=
        node_probability(tree, n) * p.value(n);
  dual.add_row(norm, lp::Sense::Equal, 1.0);
  for (NodeId n : tree.all_nodes()) {
    add_support_rows(gens.at(n).C, n, false, c_epi.at(n));
    if (d_epi.count(n)) add_support_rows(*gens.at(n).D, n, true, d_epi.at(n));
    else if (tree.stage(n) < tree.horizon()) {
      // D = R^d: sigma_D = indicator of {0}: martingale rows
      for (int j = 0; j < model.assets; ++j) {
        VectorXd e = VectorXd::Zero(model.assets);
        e[j] = 1.0;
        VectorXd row = VectorXd::Zero(nv);
        scatter_expected_delta(model, ylay, n, e, row);
        dual.add_row(row, lp::Sense::Equal, 0.0);
      }
    }
  }
  lp::LPSolution dsol = lp::solve(dual);
  rep.statuses["dual"] = lp::to_string(dsol.status);
  if (dsol.status == lp::SolveStatus::Optimal) {
    rep.dual_value = -dsol.objective_value;
    GeneralProcess ysol(model.tree);
    AdaptedProcess yproc(model.tree, std::vector<int>(tree.horizon() + 1, model.assets));
    for (NodeId n : tree.all_nodes())
      yproc.set(n, dsol.x.segment(ylay.x_offset.at(n), model.assets));
    rep.dual_solution = GeneralProcess::from_adapted(yproc);
  } else {
    rep.dual_value = dsol.status == lp::SolveStatus::Unbounded ? kPlusInf : kMinusInf;
  }
  rep.gap = rep.primal_value - rep.dual_value;
  const double scale = std::max(1.0, std::abs(rep.primal_value));
  rep.gap_within_tolerance = std::abs(rep.gap) <= rep.relative_gap_tolerance * scale;
  rep.statuses["weak_duality"] = rep.gap >= -1e-7 * scale ? "ok" : "violated";
  return rep;
}

std::optional<AdaptedProcess> find_consistent_price_system(const MarketModel& model,
                                                           bool strict) {
  model.validate();
  if (strict && !model.conical)
    throw ValidationError("strict price-system search requires a conical model");
  const ScenarioTree& tree = *model.tree;
  auto gens = enumerate_market(model);
  Layout ylay = portfolio_layout(model);

  auto add_cone_rows = [&](lp::LinearProgram& prog, int nv) {
    auto emit = [&](NodeId n, const VectorXd& v, bool on_delta, lp::Sense sense) {
      VectorXd row = VectorXd::Zero(nv);
      if (on_delta)
        scatter_expected_delta(model, ylay, n, v, row);
      else
        row.segment(ylay.x_offset.at(n), model.assets) = v;
      prog.add_row(row, sense, 0.0);
    };
    for (NodeId n : tree.all_nodes()) {
      for (const auto& r : gens.at(n).C.rays) emit(n, r, false, lp::Sense::LessEqual);
      for (const auto& l : gens.at(n).C.lines) emit(n, l, false, lp::Sense::Equal);
      if (tree.stage(n) == tree.horizon()) continue;
      if (gens.at(n).D) {
        for (const auto& r : gens.at(n).D->rays) emit(n, r, true, lp::Sense::LessEqual);
        for (const auto& l : gens.at(n).D->lines) emit(n, l, true, lp::Sense::Equal);
      } else {
        for (int j = 0; j < model.assets; ++j) {
          VectorXd e = VectorXd::Zero(model.assets);
          e[j] = 1.0;
          emit(n, e, true, lp::Sense::Equal);
        }
      }
    }
  };

  if (strict) {
    // maximize the worst coordinate after pinning the root cash to 1
    const int tcol = ylay.size;
    const int nv = ylay.size + 1;
    lp::LinearProgram prog;
    prog.objective = VectorXd::Zero(nv);
    prog.objective[tcol] = -1.0;
    prog.bounds.resize(nv);
    prog.bounds[tcol] = {std::nullopt, 1.0};
    add_cone_rows(prog, nv);
    VectorXd pin = VectorXd::Zero(nv);
    pin[ylay.x_offset.at(tree.root())] = 1.0;
    prog.add_row(pin, lp::Sense::Equal, 1.0);
    for (NodeId n : tree.all_nodes())
      for (int j = 0; j < model.assets; ++j) {
        VectorXd row = VectorXd::Zero(nv);
        row[tcol] = 1.0;
        row[ylay.x_offset.at(n) + j] = -1.0;
        prog.add_row(row, lp::Sense::LessEqual, 0.0);
      }
    lp::LPSolution sol = lp::solve(prog);
    if (sol.status != lp::SolveStatus::Optimal || sol.x[tcol] < 1e-6) return std::nullopt;
    return extract_portfolios(model, ylay, sol.x);
  }

  // nonzero system: push each coordinate inside the box |y| <= 1
  for (int j = 0; j < model.assets; ++j) {
    const int nv = ylay.size;
    lp::LinearProgram prog;
    prog.objective = VectorXd::Zero(nv);
    prog.bounds.assign(nv, {-1.0, 1.0});
    for (NodeId n : tree.all_nodes())
      prog.objective[ylay.x_offset.at(n) + j] -= node_probability(tree, n);
    add_cone_rows(prog, nv);
    lp::LPSolution sol = lp::solve(prog);
    if (sol.status == lp::SolveStatus::Optimal && -sol.objective_value > 1e-7)
      return extract_portfolios(model, ylay, sol.x);
  }
  return std::nullopt;
}

bool is_consistent_price_system(const MarketModel& model, const AdaptedProcess& y,
                                double tol) {
  const ScenarioTree& tree = *model.tree;
  auto gens = enumerate_market(model);
  for (NodeId n : tree.all_nodes()) {
    const VectorXd& yn = y.value(n);
    const double scale = std::max(1.0, yn.lpNorm<Eigen::Infinity>());
    for (const auto& r : gens.at(n).C.rays)
      if (r.dot(yn) > tol * scale) return false;
    for (const auto& l : gens.at(n).C.lines)
      if (std::abs(l.dot(yn)) > tol * scale) return false;
    if (tree.stage(n) == tree.horizon()) continue;
    VectorXd w = -yn;
    for (NodeId c : tree.children(n)) w += tree.cond_prob(c) * y.value(c);
    if (gens.at(n).D) {
      for (const auto& r : gens.at(n).D->rays)
        if (r.dot(w) > tol * scale) return false;
      for (const auto& l : gens.at(n).D->lines)
        if (std::abs(l.dot(w)) > tol * scale) return false;
    } else if (w.lpNorm<Eigen::Infinity>() > tol * scale) {
      return false;
    }
  }
  return true;
}

ArbitrageReport check_no_arbitrage(const MarketModel& model, double tol) {
  model.validate();
  const ScenarioTree& tree = *model.tree;
  Layout lay = portfolio_layout(model);
  // claims live after the portfolios
  std::map<NodeId, int> u_offset;
  int nv = lay.size;
  for (NodeId n : tree.all_nodes()) {
    u_offset[n] = nv;
    nv += model.assets;
  }

  lp::LinearProgram base;
  base.objective = VectorXd::Zero(nv);
  base.bounds.resize(nv);
  for (NodeId n : tree.all_nodes())
    for (int j = 0; j < model.assets; ++j) base.bounds[u_offset.at(n) + j] = {0.0, 1.0};
  for (NodeId n : tree.all_nodes()) {
    for (const auto& [g, h] : model.cone_C(n).ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      row.segment(u_offset.at(n), model.assets) += g;
      base.add_row(row, lp::Sense::LessEqual, h);
    }
    for (const auto& [g, h] : model.cone_C(n).eqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      row.segment(u_offset.at(n), model.assets) += g;
      base.add_row(row, lp::Sense::Equal, h);
    }
  }
  add_holding_rows(model, lay, base, nv);
  add_terminal_zero_rows(model, lay, base, nv);

  ArbitrageReport rep;
  for (int t = 0; t <= tree.horizon(); ++t) {
    for (int i = 0; i < model.assets; ++i) {
      lp::LinearProgram prog = base;
      for (NodeId n : tree.stage_nodes(t))
        prog.objective[u_offset.at(n) + i] = -node_probability(tree, n);
      lp::LPSolution sol = lp::solve(prog);
      if (sol.status == lp::SolveStatus::Optimal && -sol.objective_value > tol) {
        rep.no_arbitrage = false;
        AdaptedProcess claim(model.tree,
                             std::vector<int>(tree.horizon() + 1, model.assets));
        for (NodeId n : tree.all_nodes())
          claim.set(n, sol.x.segment(u_offset.at(n), model.assets));
        rep.claim = std::move(claim);
        rep.hedge = extract_portfolios(model, lay, sol.x);
        return rep;
      }
    }
  }
  rep.no_arbitrage = true;
  if (model.conical) rep.strict_system = find_consistent_price_system(model, true);
  return rep;
}

FtapReport ftap_equivalence(const MarketModel& model) {
  if (!model.liquid_prices)
    throw ValidationError("ftap check requires a perfectly liquid model");
  for (NodeId n : model.tree->all_nodes())
    if (model.liquid_prices->value(n).minCoeff() <= 0.0)
      throw ValidationError("ftap check requires strictly positive prices");

  FtapReport rep;
  rep.no_arbitrage = check_no_arbitrage(model).no_arbitrage;
  auto y = find_consistent_price_system(model, true);
  rep.martingale_measure_exists = y.has_value();
  rep.agree = rep.no_arbitrage == rep.martingale_measure_exists;
  if (!y) return rep;

  const ScenarioTree& tree = *model.tree;
  const double y0_root = y->value(tree.root())[0];
  for (NodeId leaf : tree.leaves())
    rep.leaf_measure[leaf] =
        node_probability(tree, leaf) * y->value(leaf)[0] / y0_root;

  // node-wise Q-martingale check on the price process
  const AdaptedProcess& s = *model.liquid_prices;
  double viol = 0.0;
  for (NodeId n : tree.all_nodes()) {
    if (tree.stage(n) == tree.horizon()) continue;
    VectorXd acc = VectorXd::Zero(s.dim(0));
    double mass = 0.0;
    for (NodeId c : tree.children(n)) {
      const double q = tree.cond_prob(c) * y->value(c)[0] / y->value(n)[0];
      acc += q * s.value(c);
      mass += q;
    }
    viol = std::max(viol, std::abs(mass - 1.0));
    viol = std::max(viol, (acc - s.value(n)).lpNorm<Eigen::Infinity>());
  }
  rep.max_martingale_violation = viol;
  return rep;
}

duality::GapReport optimal_consumption(
    const MarketModel& model,
    const std::map<NodeId, polyconvex::PolyhedralFunction>& neg_utility,
    const std::optional<AdaptedProcess>& endowment) {
  model.validate();
  const ScenarioTree& tree = *model.tree;
  duality::GapReport rep;
  rep.statuses["orientation"] = "max";

  Layout lay = portfolio_layout(model);
  std::map<NodeId, int> c_offset, w_col;
  int nv = lay.size;
  for (NodeId n : tree.all_nodes()) {
    c_offset[n] = nv;
    nv += model.assets;
  }
  for (NodeId n : tree.all_nodes()) w_col[n] = nv++;

  lp::LinearProgram prog;
  prog.objective = VectorXd::Zero(nv);
  prog.bounds.resize(nv);
  for (NodeId n : tree.all_nodes()) {
    prog.objective[w_col.at(n)] = node_probability(tree, n);
    const auto& F = neg_utility.at(n);
    if (F.dim != model.assets)
      throw ValidationError("utility dimension must equal the asset count");
    if (F.pieces.empty()) {
      VectorXd row = VectorXd::Zero(nv);
      row[w_col.at(n)] = -1.0;
      prog.add_row(row, lp::Sense::LessEqual, 0.0);
    } else {
      for (const auto& [a, b] : F.pieces) {
        VectorXd row = VectorXd::Zero(nv);
        row.segment(c_offset.at(n), model.assets) = a;
        row[w_col.at(n)] = -1.0;
        prog.add_row(row, lp::Sense::LessEqual, -b);
      }
    }
    for (const auto& [g, h] : F.domain.ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      row.segment(c_offset.at(n), model.assets) = g;
      prog.add_row(row, lp::Sense::LessEqual, h);
    }
    for (const auto& [g, h] : F.domain.eqs) {
      VectorXd row = VectorXd::Zero(nv);
      row.segment(c_offset.at(n), model.assets) = g;
      prog.add_row(row, lp::Sense::Equal, h);
    }
    // dx + c - e in C
    for (const auto& [g, h] : model.cone_C(n).ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      row.segment(c_offset.at(n), model.assets) += g;
      const double shift = endowment ? g.dot(endowment->value(n)) : 0.0;
      prog.add_row(row, lp::Sense::LessEqual, h + shift);
    }
    for (const auto& [g, h] : model.cone_C(n).eqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      row.segment(c_offset.at(n), model.assets) += g;
      const double shift = endowment ? g.dot(endowment->value(n)) : 0.0;
      prog.add_row(row, lp::Sense::Equal, h + shift);
    }
  }
  add_holding_rows(model, lay, prog, nv);
  add_terminal_zero_rows(model, lay, prog, nv);

  lp::LPSolution sol = lp::solve(prog);
  rep.statuses["primal"] = lp::to_string(sol.status);
  if (sol.status != lp::SolveStatus::Optimal) {
    rep.primal_value = sol.status == lp::SolveStatus::Unbounded ? kPlusInf : kMinusInf;
    rep.dual_value = rep.primal_value;
    return rep;
  }
  rep.primal_value = -sol.objective_value;  // back to the maximization form
  rep.primal_solution = extract_portfolios(model, lay, sol.x);

  // Dual over consistent price systems: the utility maximum is bounded by
  //   inf_{y in D} E sum [e.y - U*(y)],  U*(y) = inf_c {c.y - U(c)},
  // and U*(y) = -F*(-y) = min_k (a_k.y - b_k) from the conjugate of F = -U.
  auto gens = enumerate_market(model);
  Layout ylay = portfolio_layout(model);
  std::map<NodeId, int> s_col;  // epigraph of -U*
  int dnv = ylay.size;
  for (NodeId n : tree.all_nodes()) s_col[n] = dnv++;
  lp::LinearProgram dual;
  dual.objective = VectorXd::Zero(dnv);
  dual.bounds.resize(dnv);
  for (NodeId n : tree.all_nodes()) {
    const double prob = node_probability(tree, n);
    dual.objective[s_col.at(n)] = prob;
    if (endowment)
      dual.objective.segment(ylay.x_offset.at(n), model.assets) +=
          prob * endowment->value(n);
    const auto Ustar = polyconvex::conjugate(neg_utility.at(n));
    // r >= -U*(y) = max_k (b_k - a_k.y): rows -a_k.y - r <= -b_k
    for (const auto& [a, b] : Ustar.pieces) {
      VectorXd row = VectorXd::Zero(dnv);
      row.segment(ylay.x_offset.at(n), model.assets) = -a;
      row[s_col.at(n)] = -1.0;
      dual.add_row(row, lp::Sense::LessEqual, -b);
    }
    for (const auto& [g, h] : Ustar.domain.ineqs) {
      VectorXd row = VectorXd::Zero(dnv);
      row.segment(ylay.x_offset.at(n), model.assets) = -g;
      dual.add_row(row, lp::Sense::LessEqual, h);
    }
    for (const auto& [g, h] : Ustar.domain.eqs) {
      VectorXd row = VectorXd::Zero(dnv);
      row.segment(ylay.x_offset.at(n), model.assets) = -g;
      dual.add_row(row, lp::Sense::Equal, h);
    }
    // y in the consistent-price-system cone
    for (const auto& r : gens.at(n).C.rays) {
      VectorXd row = VectorXd::Zero(dnv);
      row.segment(ylay.x_offset.at(n), model.assets) = r;
      dual.add_row(row, lp::Sense::LessEqual, 0.0);
    }
    for (const auto& l : gens.at(n).C.lines) {
      VectorXd row = VectorXd::Zero(dnv);
      row.segment(ylay.x_offset.at(n), model.assets) = l;
      dual.add_row(row, lp::Sense::Equal, 0.0);
    }
    if (tree.stage(n) == tree.horizon()) continue;
    if (gens.at(n).D) {
      for (const auto& r : gens.at(n).D->rays) {
        VectorXd row = VectorXd::Zero(dnv);
        scatter_expected_delta(model, ylay, n, r, row);
        dual.add_row(row, lp::Sense::LessEqual, 0.0);
      }
      for (const auto& l : gens.at(n).D->lines) {
        VectorXd row = VectorXd::Zero(dnv);
        scatter_expected_delta(model, ylay, n, l, row);
        dual.add_row(row, lp::Sense::Equal, 0.0);
      }
    } else {
      for (int j = 0; j < model.assets; ++j) {
        VectorXd e = VectorXd::Zero(model.assets);
        e[j] = 1.0;
        VectorXd row = VectorXd::Zero(dnv);
        scatter_expected_delta(model, ylay, n, e, row);
        dual.add_row(row, lp::Sense::Equal, 0.0);
      }
    }
  }
  lp::LPSolution dsol = lp::solve(dual);
  rep.statuses["dual"] = lp::to_string(dsol.status);
  if (dsol.status == lp::SolveStatus::Optimal) {
    rep.dual_value = dsol.objective_value;
    AdaptedProcess yproc(model.tree, std::vector<int>(tree.horizon() + 1, model.assets));
    for (NodeId n : tree.all_nodes())
      yproc.set(n, dsol.x.segment(ylay.x_offset.at(n), model.assets));
    rep.dual_solution = GeneralProcess::from_adapted(yproc);
  } else {
    rep.dual_value = dsol.status == lp::SolveStatus::Unbounded ? kMinusInf : kPlusInf;
  }
  rep.gap = rep.dual_value - rep.primal_value;  // max orientation
  const double scale = std::max(1.0, std::abs(rep.primal_value));
  rep.gap_within_tolerance = std::abs(rep.gap) <= rep.relative_gap_tolerance * scale;
  rep.statuses["weak_duality"] = rep.gap >= -1e-7 * scale ? "ok" : "violated";
  return rep;
}

bool recession_linearity_check(const MarketModel& model, double tol) {
  model.validate();
  const ScenarioTree& tree = *model.tree;
  Layout lay = portfolio_layout(model);
  const int nv = lay.size;

  std::vector<VectorXd> ineq_rows;
  lp::LinearProgram base;
  base.objective = VectorXd::Zero(nv);
  base.bounds.assign(nv, {-1.0, 1.0});
  for (NodeId n : tree.all_nodes()) {
    for (const auto& [g, h] : model.cone_C(n).ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      base.add_row(row, lp::Sense::LessEqual, 0.0);
      ineq_rows.push_back(row);
    }
    for (const auto& [g, h] : model.cone_C(n).eqs) {
      VectorXd row = VectorXd::Zero(nv);
      scatter_delta(model, lay, n, g, row);
      base.add_row(row, lp::Sense::Equal, 0.0);
    }
    if (tree.stage(n) == tree.horizon()) {
      for (int j = 0; j < model.assets; ++j) {
        VectorXd row = VectorXd::Zero(nv);
        row[lay.x_offset.at(n) + j] = 1.0;
        base.add_row(row, lp::Sense::Equal, 0.0);
      }
      continue;
    }
    auto it = model.D.find(n);
    if (it == model.D.end()) continue;
    for (const auto& [g, h] : it->second.ineqs) {
      VectorXd row = VectorXd::Zero(nv);
      row.segment(lay.x_offset.at(n), model.assets) = g;
      base.add_row(row, lp::Sense::LessEqual, 0.0);
      ineq_rows.push_back(row);
    }
    for (const auto& [g, h] : it->second.eqs) {
      VectorXd row = VectorXd::Zero(nv);
      row.segment(lay.x_offset.at(n), model.assets) = g;
      base.add_row(row, lp::Sense::Equal, 0.0);
    }
  }

  // K is linear iff no inequality row can go strictly slack inside K.
  for (const VectorXd& row : ineq_rows) {
    lp::LinearProgram prog = base;
    prog.objective = row;
    lp::LPSolution sol = lp::solve(prog);
    if (sol.status != lp::SolveStatus::Optimal) return false;
    if (sol.objective_value < -tol) return false;
  }
  return true;
}

}  // namespace treedual::market
