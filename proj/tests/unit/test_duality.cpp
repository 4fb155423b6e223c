#include <doctest.h>

#include <cmath>
#include <random>

#include "common/sp_generators.hpp"
#include "common/tree_fixtures.hpp"
#include "treedual/duality.hpp"

using namespace treedual;
using namespace treedual::duality;
using polyconvex::kMinusInf;
using polyconvex::kPlusInf;
using polyconvex::Polyhedron;
using polyconvex::PolyhedralFunction;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  int i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// minimize E|x0 - u| with u in {2,0} at stage 1, x0 decided at stage 0.
StochasticProgram newsvendor(double up = 2.0, double dn = 0.0, int param_stage = 1) {
  StochasticProgram sp;
  sp.tree = fixtures::two_leaf(0.5);
  sp.stage_dims = {1, 0};
  sp.param_dims = {0, 1};
  GeneralProcess u(sp.tree);
  GeneralProcess::Component c;
  c.time = 1;
  c.stage = param_stage;
  c.dim = 1;
  c.values[1] = vec({up});
  c.values[2] = vec({dn});
  u.add_component(std::move(c));
  sp.parameter = u;
  for (NodeId n : {1, 2}) {
    PolyhedralFunction f;
    f.dim = 2;  // (x0, u)
    f.pieces.emplace_back(vec({1.0, -1.0}), 0.0);
    f.pieces.emplace_back(vec({-1.0, 1.0}), 0.0);
    f.domain = Polyhedron::whole_space(2);
    sp.attach(n, f);
  }
  return sp;
}

// Ex 3.6 shape for the same data: f_node(x0, u0) = |x0 + u0 - w_node| with
// u0 carried by the leaves and data 0.
StochasticProgram shadow_newsvendor() {
  StochasticProgram sp;
  sp.tree = fixtures::two_leaf(0.5);
  sp.stage_dims = {1, 0};
  sp.param_dims = {1, 0};
  GeneralProcess u(sp.tree);
  GeneralProcess::Component c;
  c.time = 0;
  c.stage = 1;
  c.dim = 1;
  c.values[1] = vec({0.0});
  c.values[2] = vec({0.0});
  u.add_component(std::move(c));
  sp.parameter = u;
  const std::map<NodeId, double> w{{1, 2.0}, {2, 0.0}};
  for (NodeId n : {1, 2}) {
    PolyhedralFunction f;
    f.dim = 2;  // (x0, u0)
    f.pieces.emplace_back(vec({1.0, 1.0}), -w.at(n));
    f.pieces.emplace_back(vec({-1.0, -1.0}), w.at(n));
    f.domain = Polyhedron::whole_space(2);
    sp.attach(n, f, {0});
  }
  return sp;
}

// Independent oracle for min_x E|x-u|: scan a fine grid.
double scan_newsvendor(double up, double dn) {
  double best = kPlusInf;
  for (double x = -3.0; x <= 5.0; x += 1e-4)
    best = std::min(best, 0.5 * std::abs(x - up) + 0.5 * std::abs(x - dn));
  return best;
}

}  // namespace

TEST_CASE("newsvendor primal value matches the scan oracle") {
  StochasticProgram sp = newsvendor();
  PrimalResult res = solve_primal(sp);
  REQUIRE(res.status == lp::SolveStatus::Optimal);
  CHECK(res.value == doctest::Approx(scan_newsvendor(2.0, 0.0)).epsilon(1e-6));
  CHECK(res.value == doctest::Approx(1.0));
  CHECK(res.lp_check.ok());
  const double x0 = res.solution->value(0)[0];
  CHECK(x0 >= -1e-9);
  CHECK(x0 <= 2.0 + 1e-9);
}

TEST_CASE("perfect information drives the newsvendor value to zero") {
  StochasticProgram sp = newsvendor();
  sp.stage_dims = {0, 1};
  for (NodeId n : {1, 2}) {
    PolyhedralFunction f;
    f.dim = 2;  // (x1, u)
    f.pieces.emplace_back(vec({1.0, -1.0}), 0.0);
    f.pieces.emplace_back(vec({-1.0, 1.0}), 0.0);
    f.domain = Polyhedron::whole_space(2);
    sp.attach(n, f);
  }
  PrimalResult res = solve_primal(sp);
  REQUIRE(res.status == lp::SolveStatus::Optimal);
  CHECK(res.value == doctest::Approx(0.0));
}

TEST_CASE("adaptedness violation yields +infinity") {
  // f = indicator{x0 = u0} with u0 only F_1-measurable and distinct values
  StochasticProgram sp;
  sp.tree = fixtures::two_leaf(0.5);
  sp.stage_dims = {1, 0};
  sp.param_dims = {1, 0};
  GeneralProcess u(sp.tree);
  GeneralProcess::Component c;
  c.time = 0;
  c.stage = 1;
  c.dim = 1;
  c.values[1] = vec({1.0});
  c.values[2] = vec({-1.0});
  u.add_component(std::move(c));
  sp.parameter = u;
  PolyhedralFunction f;
  f.dim = 2;
  f.domain = Polyhedron::whole_space(2);
  f.domain.add_eq(vec({1.0, -1.0}), 0.0);
  sp.attach(0, f);
  PrimalResult res = solve_primal(sp);
  CHECK(res.status == lp::SolveStatus::Infeasible);
  CHECK(res.value == kPlusInf);
}

TEST_CASE("lagrangian integrand for inequality constraints") {
  // f(x,u) = indicator{x + u <= 0}: l(x,y) = x.y for y >= 0, -inf otherwise
  StochasticProgram sp;
  sp.tree = fixtures::two_leaf(0.5);
  sp.stage_dims = {1, 0};
  sp.param_dims = {1, 0};
  GeneralProcess u(sp.tree);
  GeneralProcess::Component c;
  c.time = 0;
  c.stage = 0;
  c.dim = 1;
  c.values[0] = vec({0.0});
  u.add_component(std::move(c));
  sp.parameter = u;
  PolyhedralFunction f;
  f.dim = 2;
  f.domain = Polyhedron::whole_space(2);
  f.domain.add_ineq(vec({1.0, 1.0}), 0.0);
  sp.attach(0, f);

  auto pos = lagrangian_integrand(sp, 0, vec({1.5}));
  REQUIRE_FALSE(pos.minus_infinity);
  for (double x : {-1.0, 0.5, 2.0})
    CHECK(polyconvex::evaluate(pos.value, vec({x})) == doctest::Approx(1.5 * x));

  auto neg = lagrangian_integrand(sp, 0, vec({-0.5}));
  CHECK(neg.minus_infinity);
}

TEST_CASE("lagrangian integrand for the shadow-price form") {
  // f(x,u) = h(x+u) with h = |.-c|: l(x,y) = x.y - h*(y), h*(y) = c.y on [-1,1]
  StochasticProgram sp = shadow_newsvendor();
  const double c_up = 2.0;
  auto l = lagrangian_integrand(sp, 1, vec({0.7}));
  REQUIRE_FALSE(l.minus_infinity);
  for (double x : {-1.0, 0.0, 3.0})
    CHECK(polyconvex::evaluate(l.value, vec({x})) ==
          doctest::Approx(x * 0.7 - c_up * 0.7).epsilon(1e-9));
  auto out = lagrangian_integrand(sp, 1, vec({1.4}));  // outside dom h*
  CHECK(out.minus_infinity);
}

TEST_CASE("duality gap closes on the newsvendor and multipliers have the expected sign") {
  StochasticProgram sp = newsvendor();
  GapReport rep = duality_gap(sp, DualClass::Full);
  CHECK(rep.primal_value == doctest::Approx(1.0));
  CHECK(rep.dual_value == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(rep.gap_within_tolerance);
  // dphi/du_up = +1/2 so y(up) = +1; dphi/du_dn = -1/2 so y(dn) = -1
  const auto& y = rep.dual_solution.component(1);
  CHECK(y.values.at(1)[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y.values.at(2)[0] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("weak duality holds at arbitrary dual vectors") {
  StochasticProgram sp = newsvendor();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  PrimalResult primal = solve_primal(sp);
  for (int k = 0; k < 20; ++k) {
    GeneralProcess y(sp.tree);
    GeneralProcess::Component c;
    c.time = 1;
    c.stage = 1;
    c.dim = 1;
    c.values[1] = vec({coef(rng)});
    c.values[2] = vec({coef(rng)});
    y.add_component(std::move(c));
    const double g = dual_objective(sp, y);
    const double dual = std::isfinite(g) ? pairing(sp.parameter, y) + g : kMinusInf;
    CHECK(dual <= primal.value + 1e-7);
  }
}

TEST_CASE("martingale dual class loses nothing on time-separable instances") {
  // parameter declared measurable at a finer stage than its time
  StochasticProgram sp;
  sp.tree = fixtures::binary(2);
  sp.stage_dims = {1, 0, 0};
  sp.param_dims = {0, 1, 0};
  GeneralProcess u(sp.tree);
  GeneralProcess::Component c;
  c.time = 1;
  c.stage = 2;  // leaf-carried although the data is stage-1 measurable
  c.dim = 1;
  std::map<NodeId, double> data{{1, 2.0}, {2, 0.0}};
  for (NodeId leaf : sp.tree->leaves())
    c.values[leaf] = vec({data.at(sp.tree->ancestor(leaf, 1))});
  u.add_component(std::move(c));
  sp.parameter = u;
  for (NodeId n : sp.tree->stage_nodes(1)) {
    PolyhedralFunction f;
    f.dim = 2;
    f.pieces.emplace_back(vec({1.0, -1.0}), 0.0);
    f.pieces.emplace_back(vec({-1.0, 1.0}), 0.0);
    f.domain = Polyhedron::whole_space(2);
    sp.attach(n, f);
  }
  GapReport full = duality_gap(sp, DualClass::Full);
  GapReport mart = duality_gap(sp, DualClass::Martingale);
  CHECK(full.gap_within_tolerance);
  CHECK(mart.gap_within_tolerance);
  CHECK(full.dual_value == doctest::Approx(mart.dual_value).epsilon(1e-7));
  // the projected dual is stage-1 measurable
  CHECK(mart.dual_solution.component(1).stage == 1);
}

TEST_CASE("random feasible bounded programs close the gap") {
  std::mt19937_64 rng(2025);
  for (int trial = 0; trial < 15; ++trial) {
    StochasticProgram sp = generators::random_program(rng);
    GapReport rep = duality_gap(sp, DualClass::Full);
    REQUIRE(rep.statuses.at("primal") == "optimal");
    CHECK(std::abs(rep.gap) <= 1e-6 * std::max(1.0, std::abs(rep.primal_value)));
  }
}

TEST_CASE("shadow price of information on the |x0 - u| instance") {
  StochasticProgram sp = shadow_newsvendor();
  PrimalResult primal = solve_primal(sp);
  REQUIRE(primal.status == lp::SolveStatus::Optimal);
  CHECK(primal.value == doctest::Approx(1.0));

  // perfect information: y = 0
  GeneralProcess zero(sp.tree);
  {
    GeneralProcess::Component c;
    c.time = 0;
    c.stage = 1;
    c.dim = 1;
    c.values[1] = vec({0.0});
    c.values[2] = vec({0.0});
    zero.add_component(std::move(c));
  }
  CHECK(shadow_price_bound(sp, zero) == doctest::Approx(0.0));

  // the closed-form optimal penalty: y = (-1, +1) on the (2, 0) leaves
  GeneralProcess opt(sp.tree);
  {
    GeneralProcess::Component c;
    c.time = 0;
    c.stage = 1;
    c.dim = 1;
    c.values[1] = vec({-1.0});
    c.values[2] = vec({1.0});
    opt.add_component(std::move(c));
  }
  CHECK(shadow_price_bound(sp, opt) == doctest::Approx(1.0));

  // non-orthogonal penalties are rejected
  GeneralProcess bad(sp.tree);
  {
    GeneralProcess::Component c;
    c.time = 0;
    c.stage = 1;
    c.dim = 1;
    c.values[1] = vec({1.0});
    c.values[2] = vec({1.0});
    bad.add_component(std::move(c));
  }
  CHECK_THROWS_AS(shadow_price_bound(sp, bad), ValidationError);

  // the LP-optimised orthogonal dual closes the gap
  GapReport rep = duality_gap(sp, DualClass::Orthogonal);
  CHECK(rep.gap_within_tolerance);
  CHECK(rep.dual_value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(is_orthogonal_to_adapted(rep.dual_solution, 1e-7));
}

TEST_CASE("shadow price bounds on random instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    StochasticProgram sp = generators::random_shadow_price_program(rng);
    PrimalResult primal = solve_primal(sp);
    REQUIRE(primal.status == lp::SolveStatus::Optimal);
    for (int k = 0; k < 5; ++k) {
      GeneralProcess y = generators::random_orthogonal_penalty(rng, sp);
      CHECK(shadow_price_bound(sp, y) <= primal.value + 1e-7);
    }
    GapReport rep = duality_gap(sp, DualClass::Orthogonal);
    CHECK(std::abs(rep.gap) <= 1e-6 * std::max(1.0, std::abs(rep.primal_value)));
  }
}

TEST_CASE("interchange rule: non-adapted minimization splits scenariowise") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    TreePtr tree = fixtures::random_tree(rng, 3, 3);
    const int T = tree->horizon();
    StochasticProgram sp;
    sp.tree = tree;
    sp.stage_dims.assign(T + 1, 0);
    sp.stage_dims[T] = 2;  // leaf-indexed decision = arbitrary measurable u
    sp.param_dims.assign(T + 1, 0);
    sp.parameter = GeneralProcess(tree);
    std::map<NodeId, PolyhedralFunction> leaf_fns;
    for (NodeId leaf : tree->leaves()) {
      PolyhedralFunction h;
      h.dim = 2;
      for (int k = 0; k < 3; ++k)
        h.pieces.emplace_back(vec({coef(rng), coef(rng)}), coef(rng));
      h.domain = Polyhedron::box(vec({-2, -2}), vec({2, 2}));
      leaf_fns[leaf] = h;
      sp.attach(leaf, h);
    }
    const double joint = solve_primal(sp).value;
    double split = 0.0;
    for (NodeId leaf : tree->leaves()) {
      // scenario-wise minimum by a tiny epigraph LP
      lp::LinearProgram prog;
      prog.objective = vec({0.0, 0.0, 1.0});
      prog.bounds.resize(3);
      const auto& h = leaf_fns.at(leaf);
      for (const auto& [a, b] : h.pieces)
        prog.add_row(vec({a[0], a[1], -1.0}), lp::Sense::LessEqual, -b);
      for (const auto& [g, hh] : h.domain.ineqs)
        prog.add_row(vec({g[0], g[1], 0.0}), lp::Sense::LessEqual, hh);
      split += node_probability(*tree, leaf) * lp::solve(prog).objective_value;
    }
    CHECK(joint == doctest::Approx(split).epsilon(1e-9));
  }
}

TEST_CASE("Jensen's inequality for polyhedral integrands") {
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    TreePtr tree = fixtures::random_tree(rng, 3, 3);
    const int T = tree->horizon();
    PolyhedralFunction h;
    const int k = 1 + static_cast<int>(rng() % 3);
    h.dim = k;
    for (int p = 0; p < 3; ++p) {
      VectorXd a(k);
      for (int j = 0; j < k; ++j) a[j] = coef(rng);
      h.pieces.emplace_back(a, coef(rng));
    }
    h.domain = Polyhedron::whole_space(k);
    AdaptedProcess x(tree, [&] {
      std::vector<int> dims(T + 1, 0);
      dims[T] = k;
      return dims;
    }());
    for (NodeId n : tree->leaves()) {
      VectorXd v(k);
      for (int j = 0; j < k; ++j) v[j] = coef(rng);
      x.set(n, v);
    }
    const int t = static_cast<int>(rng() % (T + 1));
    AdaptedProcess ex = conditional_expectation(x, t, T);
    double lhs = 0.0, rhs = 0.0;
    for (NodeId n : tree->stage_nodes(t))
      lhs += node_probability(*tree, n) * polyconvex::evaluate(h, ex.value(n));
    for (NodeId n : tree->leaves())
      rhs += node_probability(*tree, n) * polyconvex::evaluate(h, x.value(n));
    CHECK(lhs <= rhs + 1e-9);
  }
}

TEST_CASE("Bolza dual values") {
  auto tree = fixtures::two_leaf(0.5);

  // L_t(x,v) = indicator{v=0}, x free: finite iff E_t dy_{t+1} = 0 for all
  // t <= T with y_{T+1} := 0, i.e. iff y vanishes identically.
  std::map<NodeId, PolyhedralFunction> still;
  for (NodeId n : tree->all_nodes()) {
    PolyhedralFunction L;
    L.dim = 2;
    L.domain = Polyhedron::whole_space(2);
    L.domain.add_eq(vec({0.0, 1.0}), 0.0);
    still[n] = L;
  }
  auto zero = fixtures::scalar_process(tree, {{0, 0.0}, {1, 0.0}, {2, 0.0}});
  CHECK(bolza_dual_value(tree, still, zero) == doctest::Approx(0.0));
  auto mart = fixtures::scalar_process(tree, {{0, 1.0}, {1, 2.0}, {2, 0.0}});
  REQUIRE(is_martingale(mart));
  CHECK(bolza_dual_value(tree, still, mart) == kMinusInf);  // terminal term bites
  auto nonmart = fixtures::scalar_process(tree, {{0, 1.0}, {1, 3.0}, {2, 0.0}});
  CHECK(bolza_dual_value(tree, still, nonmart) == kMinusInf);

  // L_t(x,v) = indicator{x in D, v in C} with boxes: g(y) is a finite sum
  // of support functions; hand-check one evaluation.
  std::map<NodeId, PolyhedralFunction> boxes;
  for (NodeId n : tree->all_nodes()) {
    PolyhedralFunction L;
    L.dim = 2;
    L.domain = Polyhedron::box(vec({-1.0, -2.0}), vec({1.0, 2.0}));
    boxes[n] = L;
  }
  auto y = fixtures::scalar_process(tree, {{0, 1.0}, {1, 2.0}, {2, 0.0}});
  // node 0: w = E_0 y_1 - y_0 = 0, sigma_D(0)=0, sigma_C(y_0=1)=2 -> 2
  // node 1: w = -y_1 = -2 -> sigma_D(-2)=2, sigma_C(2)=4 -> 6, prob .5
  // node 2: w = 0, sigma_C(0)=0 -> 0
  CHECK(bolza_dual_value(tree, boxes, y) == doctest::Approx(-(2.0 + 0.5 * 6.0)));
}
