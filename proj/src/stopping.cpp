#include "treedual/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace treedual::stopping {

namespace {
using Eigen::VectorXd;
}

void StoppingProblem::validate() const {
  if (!tree) throw ValidationError("stopping problem without a tree");
  if (!reward.fully_defined())
    throw ValidationError("reward must be defined at every stage");
  for (int t = 0; t <= tree->horizon(); ++t)
    if (reward.dim(t) != 1) throw ValidationError("reward must be scalar");
  for (NodeId n : tree->all_nodes())
    if (reward.scalar(n) < 0.0)
      throw ValidationError("reward must be nonnegative (node " + std::to_string(n) +
                            ")");
}

AdaptedProcess snell_envelope(const StoppingProblem& sp) {
  sp.validate();
  const ScenarioTree& tree = *sp.tree;
  AdaptedProcess V(sp.tree, std::vector<int>(tree.horizon() + 1, 1));
  for (NodeId n : tree.leaves()) V.set(n, sp.reward.value(n));
  for (int t = tree.horizon() - 1; t >= 0; --t) {
    for (NodeId n : tree.stage_nodes(t)) {
      double cont = 0.0;
      for (NodeId c : tree.children(n)) cont += tree.cond_prob(c) * V.scalar(c);
      V.set(n, VectorXd::Constant(1, std::max(sp.reward.scalar(n), cont)));
    }
  }
  return V;
}

StoppingSolution solve_stopping_lp(const StoppingProblem& sp) {
  sp.validate();
  const ScenarioTree& tree = *sp.tree;
  std::map<NodeId, int> col;
  int nv = 0;
  for (NodeId n : tree.all_nodes()) col[n] = nv++;

  lp::LinearProgram prog;
  prog.objective = VectorXd::Zero(nv);
  prog.bounds.assign(nv, {0.0, std::nullopt});
  for (NodeId n : tree.all_nodes())
    prog.objective[col.at(n)] = -node_probability(tree, n) * sp.reward.scalar(n);
  const auto leaves = tree.leaves();
  for (NodeId leaf : leaves) {
    VectorXd row = VectorXd::Zero(nv);
    for (NodeId n : tree.path(leaf)) row[col.at(n)] = 1.0;
    prog.add_row(row, lp::Sense::LessEqual, 1.0);
  }

  lp::LPSolution sol = lp::solve(prog);
  if (sol.status != lp::SolveStatus::Optimal)
    throw lp::SolverError("stopping LP must be solvable");

  StoppingSolution out{.value = -sol.objective_value,
                       .relaxed = AdaptedProcess(sp.tree,
                                                 std::vector<int>(tree.horizon() + 1, 1)),
                       .stop = {},
                       .dual_martingale =
                           AdaptedProcess(sp.tree, std::vector<int>(tree.horizon() + 1, 1)),
                       .lp_check = lp::verify(prog, sol, 1e-7)};
  for (NodeId n : tree.all_nodes())
    out.relaxed.set(n, VectorXd::Constant(1, sol.x[col.at(n)]));

  // Budget multipliers are P(leaf)-scaled terminal martingale values.
  for (size_t i = 0; i < leaves.size(); ++i)
    out.dual_martingale.set(leaves[i],
                            VectorXd::Constant(1, sol.dual[static_cast<int>(i)] /
                                                      node_probability(tree, leaves[i])));
  for (int t = tree.horizon() - 1; t >= 0; --t)
    for (NodeId n : tree.stage_nodes(t)) {
      double acc = 0.0;
      for (NodeId c : tree.children(n))
        acc += tree.cond_prob(c) * out.dual_martingale.scalar(c);
      out.dual_martingale.set(n, VectorXd::Constant(1, acc));
    }

  // Earliest node where the reward meets the Snell envelope.
  AdaptedProcess V = snell_envelope(sp);
  std::vector<NodeId> frontier{tree.root()};
  for (NodeId n : tree.all_nodes()) out.stop[n] = false;
  while (!frontier.empty()) {
    std::vector<NodeId> next;
    for (NodeId n : frontier) {
      if (sp.reward.scalar(n) >= V.scalar(n) - 1e-9) {
        out.stop[n] = true;
      } else {
        for (NodeId c : tree.children(n)) next.push_back(c);
      }
    }
    frontier = std::move(next);
  }
  return out;
}

double rogers_bound(const StoppingProblem& sp, const AdaptedProcess& y) {
  sp.validate();
  if (!is_martingale(y, 1e-7))
    throw ValidationError("rogers bound requires a martingale penalty");
  const ScenarioTree& tree = *sp.tree;
  const double y0 = y.scalar(tree.root());
  double bound = 0.0;
  for (NodeId leaf : tree.leaves()) {
    double best = -std::numeric_limits<double>::infinity();
    for (NodeId n : tree.path(leaf))
      best = std::max(best, sp.reward.scalar(n) - y.scalar(n) + y0);
    bound += node_probability(tree, leaf) * best;
  }
  return bound;
}

MonteCarloBound rogers_bound_mc(const StoppingProblem& sp, const AdaptedProcess& y,
                                int paths, std::uint64_t seed) {
  sp.validate();
  if (!is_martingale(y, 1e-7))
    throw ValidationError("rogers bound requires a martingale penalty");
  if (paths <= 1) throw ValidationError("need at least two sample paths");
  const ScenarioTree& tree = *sp.tree;
  const double y0 = y.scalar(tree.root());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  double sum = 0.0, sumsq = 0.0;
  for (int k = 0; k < paths; ++k) {
    NodeId n = tree.root();
    double best = sp.reward.scalar(n) - y.scalar(n) + y0;
    while (tree.stage(n) < tree.horizon()) {
      const double u = unif(rng);
      double acc = 0.0;
      NodeId pick = tree.children(n).back();
      for (NodeId c : tree.children(n)) {
        acc += tree.cond_prob(c);
        if (u <= acc) {
          pick = c;
          break;
        }
      }
      n = pick;
      best = std::max(best, sp.reward.scalar(n) - y.scalar(n) + y0);
    }
    sum += best;
    sumsq += best * best;
  }
  MonteCarloBound mc;
  mc.paths = paths;
  mc.seed = seed;
  mc.estimate = sum / paths;
  const double var = std::max(0.0, (sumsq - sum * sum / paths) / (paths - 1));
  mc.std_error = std::sqrt(var / paths);
  return mc;
}

AdaptedProcess doob_martingale_part(const AdaptedProcess& V) {
  const ScenarioTree& tree = *V.tree();
  if (!V.fully_defined()) throw ValidationError("process must cover all stages");
  AdaptedProcess M(V.tree(), std::vector<int>(tree.horizon() + 1, 1));
  M.set(tree.root(), V.value(tree.root()));
  for (int t = 0; t < tree.horizon(); ++t)
    for (NodeId n : tree.stage_nodes(t)) {
      double cont = 0.0;
      for (NodeId c : tree.children(n)) cont += tree.cond_prob(c) * V.scalar(c);
      for (NodeId c : tree.children(n))
        M.set(c, VectorXd::Constant(1, M.scalar(n) + V.scalar(c) - cont));
    }
  return M;
}

}  // namespace treedual::stopping
