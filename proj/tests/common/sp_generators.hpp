#pragma once

// Random problem generators shared by the unit and acceptance suites.
// Instances are feasible and bounded by construction: every decision block
// is boxed by its own node's domain and the parameter data sits inside the
// domain's parameter box.

#include <random>

#include "common/tree_fixtures.hpp"
#include "treedual/duality.hpp"

namespace generators {

using treedual::AdaptedProcess;
using treedual::GeneralProcess;
using treedual::NodeId;
using treedual::TreePtr;
using treedual::duality::StochasticProgram;
using treedual::polyconvex::Polyhedron;
using treedual::polyconvex::PolyhedralFunction;
using Eigen::VectorXd;

inline StochasticProgram random_program(std::mt19937_64& rng, int max_depth = 3,
                                        int max_branch = 3, int max_dim = 3) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (;;) {
    TreePtr tree = fixtures::random_tree(rng, max_depth, max_branch, 40);
    const int T = tree->horizon();
    StochasticProgram sp;
    sp.tree = tree;
    sp.stage_dims.resize(T + 1);
    sp.param_dims.assign(T + 1, 0);
    int total_m = 0;
    for (int t = 0; t <= T; ++t) {
      sp.stage_dims[t] = static_cast<int>(rng() % (max_dim + 1));
      if (total_m < 3 && rng() % 2 == 0) {
        sp.param_dims[t] = 1 + static_cast<int>(rng() % 2);
        total_m += sp.param_dims[t];
      }
    }
    int total_dim = 0;
    for (int t = 0; t <= T; ++t) total_dim += sp.stage_dims[t] + sp.param_dims[t];
    if (total_dim == 0) continue;

    sp.parameter = GeneralProcess(tree);
    for (int t = 0; t <= T; ++t) {
      if (sp.param_dims[t] == 0) continue;
      GeneralProcess::Component c;
      c.time = t;
      c.stage = t + static_cast<int>(rng() % (T - t + 1));
      c.dim = sp.param_dims[t];
      for (NodeId n : tree->stage_nodes(c.stage)) {
        VectorXd v(c.dim);
        for (int j = 0; j < c.dim; ++j) v[j] = coef(rng);
        c.values[n] = v;
      }
      sp.parameter.add_component(std::move(c));
    }

    bool any = false;
    for (NodeId n : tree->all_nodes()) {
      const int t = tree->stage(n);
      const int hist = sp.history_dim(t);
      const int D = hist + sp.param_dims[t];
      if (D == 0) continue;
      PolyhedralFunction f;
      f.dim = D;
      const int np = 1 + static_cast<int>(rng() % 3);
      for (int k = 0; k < np; ++k) {
        VectorXd a(D);
        for (int j = 0; j < D; ++j) a[j] = coef(rng);
        f.pieces.emplace_back(a, coef(rng));
      }
      f.domain = Polyhedron::whole_space(D);
      // box the node's own decision block and its parameter slice
      const int own = sp.stage_dims[t];
      for (int j = hist - own; j < D; ++j) {
        if (j < hist - own) continue;
        VectorXd e = VectorXd::Zero(D);
        e[j] = 1.0;
        f.domain.add_ineq(e, 2.0);
        f.domain.add_ineq(-e, 2.0);
      }
      sp.attach(n, std::move(f));
      any = true;
    }
    if (!any) continue;
    return sp;
  }
}

// Information-relaxation shape: parameters shift the decisions one for one
// (f_node = h_node(x_t + u_t)), data 0, components carried by the leaves.
inline StochasticProgram random_shadow_price_program(std::mt19937_64& rng,
                                                     int max_depth = 3,
                                                     int max_branch = 3) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  TreePtr tree = fixtures::random_tree(rng, max_depth, max_branch, 30);
  const int T = tree->horizon();
  StochasticProgram sp;
  sp.tree = tree;
  sp.stage_dims.assign(T + 1, 0);
  sp.param_dims.assign(T + 1, 0);
  for (int t = 0; t <= T; ++t)
    sp.stage_dims[t] = sp.param_dims[t] = 1 + static_cast<int>(rng() % 2);

  sp.parameter = GeneralProcess(tree);
  for (int t = 0; t <= T; ++t) {
    GeneralProcess::Component c;
    c.time = t;
    c.stage = T;
    c.dim = sp.param_dims[t];
    for (NodeId n : tree->leaves()) c.values[n] = VectorXd::Zero(c.dim);
    sp.parameter.add_component(std::move(c));
  }

  for (NodeId n : tree->all_nodes()) {
    const int t = tree->stage(n);
    const int hist = sp.history_dim(t);
    const int own = sp.stage_dims[t];
    const int D = hist + own;  // m_t == n_t
    PolyhedralFunction f;
    f.dim = D;
    // pieces and the box act on z = x_t + u_t
    auto embed = [&](const VectorXd& az) {
      VectorXd a = VectorXd::Zero(D);
      a.segment(hist - own, own) = az;
      a.segment(hist, own) += az;
      return a;
    };
    const int np = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < np; ++k) {
      VectorXd az(own);
      for (int j = 0; j < own; ++j) az[j] = coef(rng);
      f.pieces.emplace_back(embed(az), coef(rng));
    }
    f.domain = Polyhedron::whole_space(D);
    for (int j = 0; j < own; ++j) {
      VectorXd e = VectorXd::Zero(own);
      e[j] = 1.0;
      f.domain.add_ineq(embed(e), 2.0);
      f.domain.add_ineq(embed(VectorXd(-e)), 2.0);
    }
    sp.attach(n, std::move(f));
  }
  return sp;
}

// Random orthogonal penalty with component dims matching the decisions.
inline GeneralProcess random_orthogonal_penalty(std::mt19937_64& rng,
                                                const StochasticProgram& sp) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const treedual::ScenarioTree& tree = *sp.tree;
  const int T = tree.horizon();
  GeneralProcess raw(sp.tree);
  for (int t = 0; t <= T; ++t) {
    if (sp.stage_dims[t] == 0) continue;
    GeneralProcess::Component c;
    c.time = t;
    c.stage = T;
    c.dim = sp.stage_dims[t];
    for (NodeId n : tree.leaves()) {
      VectorXd v(c.dim);
      for (int j = 0; j < c.dim; ++j) v[j] = coef(rng);
      c.values[n] = v;
    }
    raw.add_component(std::move(c));
  }
  // subtract the adapted projection componentwise
  GeneralProcess proj = martingale_projection(raw);
  GeneralProcess out(sp.tree);
  for (const auto& c : raw.components()) {
    GeneralProcess::Component d = c;
    const auto& p = proj.component(c.time);
    for (auto& [id, v] : d.values) v -= p.values.at(tree.ancestor(id, p.stage));
    out.add_component(std::move(d));
  }
  return out;
}

}  // namespace generators
