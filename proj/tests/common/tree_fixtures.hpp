#pragma once

#include <map>
#include <memory>
#include <random>
#include <vector>

#include "treedual/scenario_tree.hpp"

namespace fixtures {

using treedual::AdaptedProcess;
using treedual::NodeId;
using treedual::ScenarioTree;
using treedual::TreePtr;

// Root 0 with children 1 (prob p) and 2 (prob 1-p).
inline TreePtr two_leaf(double p = 0.5) {
  std::vector<ScenarioTree::NodeRecord> nodes{
      {0, std::nullopt, 0, 1.0}, {1, 0, 1, p}, {2, 0, 1, 1.0 - p}};
  return std::make_shared<ScenarioTree>(std::move(nodes));
}

// Recombining-free binary tree of given depth, equal branch probabilities.
inline TreePtr binary(int depth) {
  std::vector<ScenarioTree::NodeRecord> nodes{{0, std::nullopt, 0, 1.0}};
  int next = 1;
  std::vector<NodeId> frontier{0};
  for (int t = 0; t < depth; ++t) {
    std::vector<NodeId> nf;
    for (NodeId p : frontier)
      for (int k = 0; k < 2; ++k) {
        nodes.push_back({next, p, 0, 0.5});
        nf.push_back(next++);
      }
    frontier = nf;
  }
  return std::make_shared<ScenarioTree>(std::move(nodes));
}

// Random tree with bounded depth/branching and random probabilities.
inline TreePtr random_tree(std::mt19937_64& rng, int max_depth, int max_branch,
                           int max_nodes = 1000) {
  std::uniform_int_distribution<int> branch(1, max_branch);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<ScenarioTree::NodeRecord> nodes{{0, std::nullopt, 0, 1.0}};
  int next = 1;
  std::vector<NodeId> frontier{0};
  const int depth = std::uniform_int_distribution<int>(1, max_depth)(rng);
  for (int t = 0; t < depth; ++t) {
    std::vector<NodeId> nf;
    for (NodeId p : frontier) {
      int b = branch(rng);
      if (next + b > max_nodes) b = 1;
      std::vector<double> w(b);
      double sum = 0;
      for (double& x : w) sum += (x = u(rng));
      for (int k = 0; k < b; ++k) {
        nodes.push_back({next, p, 0, w[k] / sum});
        nf.push_back(next++);
      }
    }
    frontier = nf;
  }
  return std::make_shared<ScenarioTree>(std::move(nodes));
}

// Scalar process from per-node values keyed by id.
inline AdaptedProcess scalar_process(TreePtr tree, std::map<NodeId, double> v) {
  AdaptedProcess p(tree, std::vector<int>(tree->horizon() + 1, 1));
  for (auto& [id, x] : v) p.set(id, Eigen::VectorXd::Constant(1, x));
  return p;
}

}  // namespace fixtures
