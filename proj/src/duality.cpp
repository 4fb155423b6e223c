#include "treedual/duality.hpp"

#include <algorithm>
#include <cmath>

namespace treedual::duality {

namespace {

using Eigen::VectorXd;
using polyconvex::kMinusInf;
using polyconvex::kPlusInf;
using polyconvex::PartialInfResult;
using polyconvex::PolyhedralFunction;

struct Assembly {
  lp::LinearProgram prog;
  std::map<NodeId, int> x_offset;  // per node, block of size n_t
  // parameter variables per (time, node at the component's stage)
  std::map<std::pair<int, NodeId>, int> u_offset;
  // fixing row index per (time, node, coordinate)
  std::map<std::tuple<int, NodeId, int>, int> fix_row;
};

// Builds the primal LP with the parameters as explicitly fixed variables.
Assembly assemble_primal(const StochasticProgram& sp) {
  const ScenarioTree& tree = *sp.tree;
  Assembly as;
  int nv = 0;
  for (NodeId n : tree.all_nodes()) {
    as.x_offset[n] = nv;
    nv += sp.stage_dims[tree.stage(n)];
  }
  for (int s = 0; s <= tree.horizon(); ++s) {
    if (sp.param_dims[s] == 0) continue;
    const auto& comp = sp.parameter.component(s);
    for (NodeId mu : tree.stage_nodes(comp.stage)) {
      as.u_offset[{s, mu}] = nv;
      nv += sp.param_dims[s];
    }
  }
  struct Term {
    NodeId node;   // carries the integrand
    NodeId leafy;  // refinement node the term is attached to
    int w_col;
  };
  std::vector<Term> terms;
  for (NodeId n : tree.all_nodes()) {
    auto it = sp.node_objectives.find(n);
    if (it == sp.node_objectives.end()) continue;
    const int t = tree.stage(n);
    int q = t;
    for (int s : it->second.u_times)
      q = std::max(q, sp.parameter.component(s).stage);
    for (NodeId mu : tree.stage_nodes(q))
      if (tree.ancestor(mu, t) == n) terms.push_back({n, mu, nv++});
  }

  as.prog.objective = VectorXd::Zero(nv);
  as.prog.bounds.resize(nv);
  for (const Term& term : terms)
    as.prog.objective[term.w_col] = node_probability(tree, term.leafy);

  // Scatter a row of f_node over the LP variables.
  for (const Term& term : terms) {
    const NodeObjective& obj = sp.node_objectives.at(term.node);
    auto scatter = [&](const VectorXd& coeffs, double wcoef) {
      VectorXd row = VectorXd::Zero(nv);
      int pos = 0;
      for (NodeId anc : tree.path(term.node)) {
        const int d = sp.stage_dims[tree.stage(anc)];
        row.segment(as.x_offset.at(anc), d) = coeffs.segment(pos, d);
        pos += d;
      }
      for (int s : obj.u_times) {
        const int d = sp.param_dims[s];
        const NodeId mu = tree.ancestor(term.leafy, sp.parameter.component(s).stage);
        row.segment(as.u_offset.at({s, mu}), d) += coeffs.segment(pos, d);
        pos += d;
      }
      row[term.w_col] = wcoef;
      return row;
    };
    const PolyhedralFunction& f = obj.f;
    if (f.pieces.empty()) {
      as.prog.add_row(scatter(VectorXd::Zero(f.dim), -1.0), lp::Sense::LessEqual, 0.0);
    } else {
      for (const auto& [a, b] : f.pieces)
        as.prog.add_row(scatter(a, -1.0), lp::Sense::LessEqual, -b);
    }
    for (const auto& [g, h] : f.domain.ineqs)
      as.prog.add_row(scatter(g, 0.0), lp::Sense::LessEqual, h);
    for (const auto& [g, h] : f.domain.eqs)
      as.prog.add_row(scatter(g, 0.0), lp::Sense::Equal, h);
  }

  // Fixing rows pin every parameter variable to its data value.
  for (int s = 0; s <= tree.horizon(); ++s) {
    if (sp.param_dims[s] == 0) continue;
    const auto& comp = sp.parameter.component(s);
    for (NodeId mu : tree.stage_nodes(comp.stage)) {
      for (int j = 0; j < sp.param_dims[s]; ++j) {
        VectorXd row = VectorXd::Zero(nv);
        row[as.u_offset.at({s, mu}) + j] = 1.0;
        as.fix_row[{s, mu, j}] = as.prog.num_rows();
        as.prog.add_row(row, lp::Sense::Equal, comp.values.at(mu)[j]);
      }
    }
  }
  return as;
}

// Concatenated y slices consumed by the integrand at `node`, read at the
// refinement node `mu`.
VectorXd gather_y(const StochasticProgram& sp, const GeneralProcess& y, NodeId node,
                  NodeId mu) {
  const ScenarioTree& tree = *sp.tree;
  const NodeObjective& obj = sp.node_objectives.at(node);
  VectorXd out(sp.consumed_param_dim(node));
  int pos = 0;
  for (int s : obj.u_times) {
    const auto& comp = y.component(s);
    out.segment(pos, comp.dim) = comp.values.at(tree.ancestor(mu, comp.stage));
    pos += comp.dim;
  }
  return out;
}

struct DualTerm {
  NodeId node;
  NodeId leafy;
  double prob;
  PartialInfResult l;
};

std::vector<DualTerm> dual_terms(const StochasticProgram& sp, const GeneralProcess& y) {
  const ScenarioTree& tree = *sp.tree;
  std::vector<DualTerm> terms;
  for (NodeId n : tree.all_nodes()) {
    auto it = sp.node_objectives.find(n);
    if (it == sp.node_objectives.end()) continue;
    const int t = tree.stage(n);
    int q = t;
    for (int s : it->second.u_times)
      q = std::max(q, y.component(s).stage);
    for (NodeId mu : tree.stage_nodes(q)) {
      if (tree.ancestor(mu, t) != n) continue;
      VectorXd yv = gather_y(sp, y, n, mu);
      terms.push_back(
          {n, mu, node_probability(tree, mu), lagrangian_integrand(sp, n, yv)});
    }
  }
  return terms;
}

// Parameter entries never consumed by any objective force y = 0 there: the
// scenariowise infimum over a free slice of -u.y is unbounded otherwise.
bool unconsumed_slice_nonzero(const StochasticProgram& sp, const GeneralProcess& y,
                              double tol = 1e-9) {
  const ScenarioTree& tree = *sp.tree;
  for (int s = 0; s <= tree.horizon(); ++s) {
    if (sp.param_dims[s] == 0) continue;
    const auto& comp = y.component(s);
    for (NodeId mu : tree.stage_nodes(comp.stage)) {
      bool consumed = false;
      for (const auto& [n, obj] : sp.node_objectives) {
        if (std::find(obj.u_times.begin(), obj.u_times.end(), s) == obj.u_times.end())
          continue;
        const int cs = std::min(comp.stage, tree.stage(n));
        if (tree.ancestor(mu, cs) == tree.ancestor(n, cs)) {
          consumed = true;
          break;
        }
      }
      if (!consumed && comp.values.at(mu).lpNorm<Eigen::Infinity>() > tol) return true;
    }
  }
  return false;
}

}  // namespace

void StochasticProgram::attach(NodeId node, polyconvex::PolyhedralFunction f) {
  const int t = tree->stage(node);
  std::vector<int> times;
  if (param_dims.size() > static_cast<size_t>(t) && param_dims[t] > 0) times.push_back(t);
  attach(node, std::move(f), std::move(times));
}

void StochasticProgram::attach(NodeId node, polyconvex::PolyhedralFunction f,
                               std::vector<int> u_times) {
  node_objectives[node] = NodeObjective{std::move(f), std::move(u_times)};
}

void StochasticProgram::validate() const {
  if (!tree) throw ValidationError("program without a tree");
  const int T = tree->horizon();
  if (static_cast<int>(stage_dims.size()) != T + 1)
    throw ValidationError("stage_dims must have horizon+1 entries");
  if (static_cast<int>(param_dims.size()) != T + 1)
    throw ValidationError("param_dims must have horizon+1 entries");
  if (node_objectives.empty()) throw ValidationError("program with no objectives");
  bool proper_seen = false;
  for (const auto& [id, obj] : node_objectives) {
    const int t = tree->stage(id);
    int prev = -1;
    for (int s : obj.u_times) {
      if (s <= prev || s > t)
        throw ValidationError("node " + std::to_string(id) +
                              ": consumed times must increase and not exceed the stage");
      if (param_dims[s] == 0)
        throw ValidationError("node " + std::to_string(id) + " consumes time " +
                              std::to_string(s) + " which has no parameter");
      prev = s;
    }
    if (obj.f.dim != history_dim(t) + consumed_param_dim(id))
      throw ValidationError("objective at node " + std::to_string(id) +
                            " has dimension " + std::to_string(obj.f.dim) +
                            ", expected " +
                            std::to_string(history_dim(t) + consumed_param_dim(id)));
    if (!obj.f.improper()) proper_seen = true;
  }
  if (!proper_seen) throw ValidationError("every node objective is improper");
  for (int s = 0; s <= T; ++s) {
    if (param_dims[s] == 0) continue;
    if (!parameter.has_time(s))
      throw ValidationError("parameter missing component for time " + std::to_string(s));
    if (parameter.component(s).dim != param_dims[s])
      throw ValidationError("parameter dimension mismatch at time " + std::to_string(s));
  }
  // Time-separability: per scenario, each parameter time feeds one term.
  for (NodeId leaf : tree->leaves()) {
    std::vector<int> seen(T + 1, 0);
    for (NodeId n : tree->path(leaf)) {
      auto it = node_objectives.find(n);
      if (it == node_objectives.end()) continue;
      for (int s : it->second.u_times)
        if (++seen[s] > 1)
          throw ValidationError("parameter time " + std::to_string(s) +
                                " consumed twice along the path of leaf " +
                                std::to_string(leaf));
    }
  }
}

int StochasticProgram::history_dim(int stage) const {
  int d = 0;
  for (int s = 0; s <= stage; ++s) d += stage_dims[s];
  return d;
}

int StochasticProgram::consumed_param_dim(NodeId node) const {
  int d = 0;
  for (int s : node_objectives.at(node).u_times) d += param_dims[s];
  return d;
}

DualClass dual_class_from_string(const std::string& s) {
  if (s == "full") return DualClass::Full;
  if (s == "martingale") return DualClass::Martingale;
  if (s == "orthogonal") return DualClass::Orthogonal;
  throw ValidationError("unknown dual class: " + s);
}

std::string to_string(DualClass c) {
  switch (c) {
    case DualClass::Full: return "full";
    case DualClass::Martingale: return "martingale";
    case DualClass::Orthogonal: return "orthogonal";
  }
  return "unknown";
}

PrimalResult solve_primal(const StochasticProgram& sp) {
  sp.validate();
  const ScenarioTree& tree = *sp.tree;
  Assembly as = assemble_primal(sp);
  lp::LPSolution sol = lp::solve(as.prog);

  PrimalResult res;
  res.status = sol.status;
  res.multipliers = GeneralProcess(sp.tree);
  if (sol.status == lp::SolveStatus::Infeasible) {
    res.value = kPlusInf;
    return res;
  }
  if (sol.status == lp::SolveStatus::Unbounded) {
    res.value = kMinusInf;
    return res;
  }
  res.value = sol.objective_value;
  res.lp_check = lp::verify(as.prog, sol, 1e-7);

  AdaptedProcess x(sp.tree, sp.stage_dims);
  for (NodeId n : tree.all_nodes())
    x.set(n, sol.x.segment(as.x_offset.at(n), sp.stage_dims[tree.stage(n)]));
  res.solution = std::move(x);

  for (int s = 0; s <= tree.horizon(); ++s) {
    if (sp.param_dims[s] == 0) continue;
    GeneralProcess::Component c;
    c.time = s;
    c.stage = sp.parameter.component(s).stage;
    c.dim = sp.param_dims[s];
    for (NodeId mu : tree.stage_nodes(c.stage)) {
      VectorXd v(c.dim);
      for (int j = 0; j < c.dim; ++j)
        v[j] = -sol.dual[as.fix_row.at({s, mu, j})] / node_probability(tree, mu);
      c.values[mu] = v;
    }
    res.multipliers.add_component(std::move(c));
  }
  return res;
}

PartialInfResult lagrangian_integrand(const StochasticProgram& sp, NodeId node,
                                      const VectorXd& y) {
  const NodeObjective& obj = sp.node_objectives.at(node);
  const int t = sp.tree->stage(node);
  return polyconvex::partial_inf(obj.f, sp.history_dim(t), y);
}

double dual_objective(const StochasticProgram& sp, const GeneralProcess& y) {
  sp.validate();
  const ScenarioTree& tree = *sp.tree;
  if (unconsumed_slice_nonzero(sp, y)) return kMinusInf;
  std::vector<DualTerm> terms = dual_terms(sp, y);

  // Variable layout: x blocks per node, then one epigraph variable per term
  // when every integrand is finite.
  std::map<NodeId, int> x_offset;
  int nv = 0;
  for (NodeId n : tree.all_nodes()) {
    x_offset[n] = nv;
    nv += sp.stage_dims[tree.stage(n)];
  }
  bool any_minus_inf = false;
  for (auto& term : terms) {
    if (term.l.improper) return kPlusInf;  // unreachable for proper integrands
    if (term.l.minus_infinity) any_minus_inf = true;
  }

  lp::LinearProgram prog;
  std::vector<int> w_col(terms.size(), -1);
  int extra = 0;
  if (!any_minus_inf)
    for (size_t i = 0; i < terms.size(); ++i) w_col[i] = nv + extra++;
  prog.objective = VectorXd::Zero(nv + extra);
  prog.bounds.resize(nv + extra);

  auto scatter = [&](const DualTerm& term, const VectorXd& coeffs, double wcoef,
                     int wc) {
    VectorXd row = VectorXd::Zero(nv + extra);
    int pos = 0;
    for (NodeId anc : tree.path(term.node)) {
      const int d = sp.stage_dims[tree.stage(anc)];
      row.segment(x_offset.at(anc), d) = coeffs.segment(pos, d);
      pos += d;
    }
    if (wc >= 0) row[wc] = wcoef;
    return row;
  };

  for (size_t i = 0; i < terms.size(); ++i) {
    const DualTerm& term = terms[i];
    const polyconvex::Polyhedron& dom =
        term.l.minus_infinity ? term.l.region : term.l.value.domain;
    for (const auto& [g, h] : dom.ineqs)
      prog.add_row(scatter(term, g, 0.0, -1), lp::Sense::LessEqual, h);
    for (const auto& [g, h] : dom.eqs)
      prog.add_row(scatter(term, g, 0.0, -1), lp::Sense::Equal, h);
    if (!any_minus_inf) {
      prog.objective[w_col[i]] = term.prob;
      if (term.l.value.pieces.empty()) {
        prog.add_row(scatter(term, VectorXd::Zero(sp.history_dim(tree.stage(term.node))),
                             -1.0, w_col[i]),
                     lp::Sense::LessEqual, 0.0);
      } else {
        for (const auto& [a, b] : term.l.value.pieces)
          prog.add_row(scatter(term, a, -1.0, w_col[i]), lp::Sense::LessEqual, -b);
      }
    }
  }

  lp::LPSolution sol = lp::solve(prog);
  if (any_minus_inf)
    return sol.status == lp::SolveStatus::Infeasible ? kPlusInf : kMinusInf;
  switch (sol.status) {
    case lp::SolveStatus::Optimal: return sol.objective_value;
    case lp::SolveStatus::Unbounded: return kMinusInf;
    case lp::SolveStatus::Infeasible: return kPlusInf;
  }
  return kPlusInf;
}

namespace {

GeneralProcess subtract(const GeneralProcess& a, const GeneralProcess& proj) {
  // a - broadcast(proj): proj components sit at their own time stage.
  GeneralProcess out(a.tree());
  const ScenarioTree& tree = *a.tree();
  for (const auto& c : a.components()) {
    GeneralProcess::Component d = c;
    const auto& p = proj.component(c.time);
    for (auto& [id, v] : d.values) v -= p.values.at(tree.ancestor(id, p.stage));
    out.add_component(std::move(d));
  }
  return out;
}

}  // namespace

GapReport duality_gap(const StochasticProgram& sp, DualClass dual_class) {
  GapReport rep;
  PrimalResult primal = solve_primal(sp);
  rep.primal_value = primal.value;
  rep.primal_solution = primal.solution;
  rep.statuses["primal"] = lp::to_string(primal.status);
  rep.statuses["dual_class"] = to_string(dual_class);

  if (primal.status == lp::SolveStatus::Infeasible) {
    rep.dual_value = kPlusInf;  // dual sup diverges along the certificate
    rep.gap = 0.0;
    rep.statuses["dual"] = "primal infeasible: certificate from phase one";
    return rep;
  }
  if (primal.status == lp::SolveStatus::Unbounded) {
    rep.dual_value = kMinusInf;
    rep.gap = 0.0;
    rep.statuses["dual"] = "primal unbounded: dual infeasible";
    return rep;
  }

  GeneralProcess y = primal.multipliers;
  switch (dual_class) {
    case DualClass::Full: break;
    case DualClass::Martingale: y = martingale_projection(y); break;
    case DualClass::Orthogonal: y = subtract(y, martingale_projection(y)); break;
  }
  rep.dual_solution = y;

  const double g = dual_objective(sp, y);
  const double pair = pairing(sp.parameter, y);
  rep.dual_value = std::isfinite(g) ? pair + g : g;
  rep.statuses["dual"] = std::isfinite(g) ? "evaluated" : "dual objective -inf";
  rep.gap = rep.primal_value - rep.dual_value;
  const double scale = std::max(1.0, std::abs(rep.primal_value));
  rep.gap_within_tolerance = std::abs(rep.gap) <= rep.relative_gap_tolerance * scale;
  rep.statuses["weak_duality"] = rep.gap >= -1e-7 * scale ? "ok" : "violated";
  return rep;
}

double shadow_price_bound(const StochasticProgram& sp, const GeneralProcess& y) {
  sp.validate();
  if (!is_orthogonal_to_adapted(y, 1e-7))
    throw ValidationError("shadow price bound requires an orthogonal process");
  const ScenarioTree& tree = *sp.tree;
  for (const auto& c : y.components())
    if (c.dim != sp.stage_dims[c.time])
      throw ValidationError("penalty dimension must match the decision dimension");

  double bound = 0.0;
  bool minus_inf = false;
  for (NodeId leaf : tree.leaves()) {
    // One unconstrained trajectory per scenario.
    const auto path = tree.path(leaf);
    std::map<NodeId, int> x_offset;
    int nv = 0;
    for (NodeId n : path) {
      x_offset[n] = nv;
      nv += sp.stage_dims[tree.stage(n)];
    }
    int extra = 0;
    std::vector<std::pair<NodeId, int>> terms;  // node with objective -> w col
    for (NodeId n : path)
      if (sp.node_objectives.count(n)) terms.push_back({n, nv + extra++});

    lp::LinearProgram prog;
    prog.objective = VectorXd::Zero(nv + extra);
    prog.bounds.resize(nv + extra);
    for (const auto& [n, wc] : terms) prog.objective[wc] = 1.0;
    for (const auto& c : y.components()) {
      const NodeId n = path[c.time];
      prog.objective.segment(x_offset.at(n), c.dim) -=
          c.values.at(tree.ancestor(leaf, c.stage));
    }

    for (const auto& [n, wc] : terms) {
      const NodeObjective& obj = sp.node_objectives.at(n);
      const int t = tree.stage(n);
      // x coefficients go on the trajectory variables; parameter
      // coefficients are folded into the right-hand side as data.
      auto scatter = [&](const VectorXd& coeffs, double wcoef) {
        VectorXd row = VectorXd::Zero(nv + extra);
        int pos = 0;
        for (NodeId anc : tree.path(n)) {
          const int d = sp.stage_dims[tree.stage(anc)];
          row.segment(x_offset.at(anc), d) = coeffs.segment(pos, d);
          pos += d;
        }
        row[wc] = wcoef;
        return row;
      };
      auto data_shift = [&](const VectorXd& coeffs) {
        double shift = 0.0;
        int pos = sp.history_dim(t);
        for (int s : obj.u_times) {
          const auto& comp = sp.parameter.component(s);
          shift += coeffs.segment(pos, sp.param_dims[s])
                       .dot(comp.values.at(tree.ancestor(leaf, comp.stage)));
          pos += sp.param_dims[s];
        }
        return shift;
      };
      const PolyhedralFunction& f = obj.f;
      if (f.pieces.empty()) {
        prog.add_row(scatter(VectorXd::Zero(f.dim), -1.0), lp::Sense::LessEqual, 0.0);
      } else {
        for (const auto& [a, b] : f.pieces)
          prog.add_row(scatter(a, -1.0), lp::Sense::LessEqual, -b - data_shift(a));
      }
      for (const auto& [g, h] : f.domain.ineqs)
        prog.add_row(scatter(g, 0.0), lp::Sense::LessEqual, h - data_shift(g));
      for (const auto& [g, h] : f.domain.eqs)
        prog.add_row(scatter(g, 0.0), lp::Sense::Equal, h - data_shift(g));
    }

    lp::LPSolution sol = lp::solve(prog);
    if (sol.status == lp::SolveStatus::Infeasible) return kPlusInf;
    if (sol.status == lp::SolveStatus::Unbounded) {
      minus_inf = true;
      continue;
    }
    bound += node_probability(tree, leaf) * sol.objective_value;
  }
  return minus_inf ? kMinusInf : bound;
}

double bolza_dual_value(const TreePtr& tree,
                        const std::map<NodeId, polyconvex::PolyhedralFunction>& lagrangians,
                        const AdaptedProcess& y) {
  const ScenarioTree& t = *tree;
  if (!y.fully_defined()) throw ValidationError("bolza dual needs y at all stages");
  const int d = y.dim(0);
  double total = 0.0;
  for (NodeId n : t.all_nodes()) {
    const auto it = lagrangians.find(n);
    if (it == lagrangians.end())
      throw ValidationError("missing Bolza integrand at node " + std::to_string(n));
    if (it->second.dim != 2 * d)
      throw ValidationError("Bolza integrand must act on (x, dx)");
    // w = E_t[y_{t+1}] - y_t, with y_{T+1} := 0.
    VectorXd w = -y.value(n);
    for (NodeId c : t.children(n)) w += t.cond_prob(c) * y.value(c);
    VectorXd arg(2 * d);
    arg.head(d) = w;
    arg.tail(d) = y.value(n);
    const double v = polyconvex::evaluate(polyconvex::conjugate(it->second), arg);
    if (v == kPlusInf) return kMinusInf;
    total += node_probability(t, n) * v;
  }
  return -total;
}

}  // namespace treedual::duality
