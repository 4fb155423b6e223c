#include <doctest.h>

#include <random>

#include "common/tree_fixtures.hpp"
#include "treedual/scenario_tree.hpp"

using namespace treedual;
using fixtures::scalar_process;

TEST_CASE("node probabilities") {
  auto tree = fixtures::two_leaf(0.5);
  CHECK(node_probability(*tree, 0) == 1.0);
  CHECK(node_probability(*tree, 1) == doctest::Approx(0.5));

  // depth-2 chain with cond_probs 0.5 then 0.4 needs siblings to fill mass
  std::vector<ScenarioTree::NodeRecord> nodes{{0, std::nullopt, 0, 1.0},
                                              {1, 0, 1, 0.5},
                                              {2, 0, 1, 0.5},
                                              {3, 1, 2, 0.4},
                                              {4, 1, 2, 0.6},
                                              {5, 2, 2, 1.0}};
  ScenarioTree chain(std::move(nodes));
  CHECK(node_probability(chain, 3) == doctest::Approx(0.2));
  CHECK_THROWS_AS(chain.node(99), ValidationError);
}

TEST_CASE("construction rejects bad trees") {
  using NR = ScenarioTree::NodeRecord;
  CHECK_THROWS_AS(ScenarioTree({NR{0, std::nullopt, 0, 1.0}, NR{1, 0, 0, 0.9}}),
                  ValidationError);  // child probs sum to 0.9
  CHECK_THROWS_AS(ScenarioTree({NR{0, std::nullopt, 0, 1.0}, NR{1, std::nullopt, 0, 1.0}}),
                  ValidationError);  // two roots
  CHECK_THROWS_AS(ScenarioTree({NR{0, std::nullopt, 0, 1.0}, NR{1, 0, 0, 0.0},
                                NR{2, 0, 0, 1.0}}),
                  ValidationError);  // zero-probability branch
}

TEST_CASE("expectation on slices and constants") {
  auto tree = fixtures::two_leaf(0.5);
  auto p = scalar_process(tree, {{0, 9.0}, {1, 2.0}, {2, 0.0}});
  CHECK(expectation(p, 1) == doctest::Approx(1.0));

  auto c = AdaptedProcess::constant(tree, Eigen::VectorXd::Constant(1, 3.25));
  CHECK(expectation(c) == doctest::Approx(3.25));

  std::vector<ScenarioTree::NodeRecord> nodes{{0, std::nullopt, 0, 1.0},
                                              {1, 0, 1, 0.2},
                                              {2, 0, 1, 0.3},
                                              {3, 0, 1, 0.5}};
  auto t3 = std::make_shared<ScenarioTree>(std::move(nodes));
  auto q = scalar_process(t3, {{0, 0.0}, {1, 3.0}, {2, -1.0}, {3, 2.0}});
  CHECK(expectation(q, 1) == doctest::Approx(1.3));
}

TEST_CASE("conditional expectation and the tower property") {
  auto tree = fixtures::binary(2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  AdaptedProcess z(tree, {1, 1, 1});
  for (NodeId n : tree->all_nodes()) z.set(n, Eigen::VectorXd::Constant(1, u(rng)));

  auto e1 = conditional_expectation(z, 1, 2);
  auto e0a = conditional_expectation(e1, 0, 1);
  auto e0b = conditional_expectation(z, 0, 2);
  CHECK(e0a.scalar(tree->root()) ==
        doctest::Approx(e0b.scalar(tree->root())).epsilon(1e-12));

  // E_t of a stage-t slice is itself.
  auto self = conditional_expectation(e1, 1, 1);
  for (NodeId n : tree->stage_nodes(1))
    CHECK(self.scalar(n) == doctest::Approx(e1.scalar(n)));
}

TEST_CASE("martingale detection") {
  auto tree = fixtures::two_leaf(0.5);
  auto y = scalar_process(tree, {{0, 1.0}, {1, 2.0}, {2, 0.0}});
  CHECK(is_martingale(y));
  auto n = scalar_process(tree, {{0, 1.0}, {1, 2.0}, {2, 1.0}});
  CHECK_FALSE(is_martingale(n));
  CHECK(is_martingale(AdaptedProcess::constant(tree, Eigen::VectorXd::Constant(1, 4.0))));
}

TEST_CASE("martingale implies constant stage expectations") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto tree = fixtures::random_tree(rng, 3, 3);
    // build a martingale from random terminal values
    std::uniform_real_distribution<double> u(-1, 1);
    AdaptedProcess y(tree, std::vector<int>(tree->horizon() + 1, 1));
    for (NodeId n : tree->leaves()) y.set(n, Eigen::VectorXd::Constant(1, u(rng)));
    for (int t = tree->horizon() - 1; t >= 0; --t) {
      auto e = conditional_expectation(
          AdaptedProcess::slice(tree, t + 1, 1,
                                [&] {
                                  std::map<NodeId, Eigen::VectorXd> m;
                                  for (NodeId n : tree->stage_nodes(t + 1))
                                    m[n] = y.value(n);
                                  return m;
                                }()),
          t, t + 1);
      for (NodeId n : tree->stage_nodes(t)) y.set(n, e.value(n));
    }
    REQUIRE(is_martingale(y, 1e-10));
    const double e0 = expectation(y, 0);
    for (int t = 1; t <= tree->horizon(); ++t)
      CHECK(expectation(y, t) == doctest::Approx(e0).epsilon(1e-10));
    double mass = 0;
    for (NodeId n : tree->stage_nodes(tree->horizon()))
      mass += node_probability(*tree, n);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("projection pi and orthogonality") {
  auto tree = fixtures::two_leaf(0.5);

  // adapted input: pi is the identity
  auto adapted = scalar_process(tree, {{0, 1.0}, {1, 2.0}, {2, 0.0}});
  auto g = GeneralProcess::from_adapted(adapted);
  auto pg = martingale_projection(g);
  CHECK(pg.component(0).values.at(0)[0] == doctest::Approx(1.0));
  CHECK(pg.component(1).values.at(1)[0] == doctest::Approx(2.0));

  // stage-1 values copied to both time components: time-0 projects to 1
  GeneralProcess h(tree);
  for (int t = 0; t <= 1; ++t) {
    GeneralProcess::Component c;
    c.time = t;
    c.stage = 1;
    c.dim = 1;
    c.values[1] = Eigen::VectorXd::Constant(1, 2.0);
    c.values[2] = Eigen::VectorXd::Constant(1, 0.0);
    h.add_component(std::move(c));
  }
  auto ph = martingale_projection(h);
  CHECK(ph.component(0).values.at(0)[0] == doctest::Approx(1.0));

  // pi is idempotent
  auto pph = martingale_projection(ph);
  CHECK(pph.component(0).values.at(0)[0] == doctest::Approx(1.0));
  CHECK(pph.component(1).values.at(1)[0] == doctest::Approx(2.0));

  // orthogonality: time-0 component carried by leaf data (1,-1), so
  // E_0 y_0 = 0; time-1 component identically zero
  GeneralProcess o(tree);
  {
    GeneralProcess::Component c0;
    c0.time = 0;
    c0.stage = 1;
    c0.dim = 1;
    c0.values[1] = Eigen::VectorXd::Constant(1, 1.0);
    c0.values[2] = Eigen::VectorXd::Constant(1, -1.0);
    o.add_component(std::move(c0));
    GeneralProcess::Component c1;
    c1.time = 1;
    c1.stage = 1;
    c1.dim = 1;
    c1.values[1] = Eigen::VectorXd::Zero(1);
    c1.values[2] = Eigen::VectorXd::Zero(1);
    o.add_component(std::move(c1));
  }
  CHECK(is_orthogonal_to_adapted(o));
  CHECK_FALSE(is_orthogonal_to_adapted(g));  // y_0 = 1 projects to 1 != 0
}

TEST_CASE("pairing identity E[x.y] = E[x.pi(y)] for adapted x") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    auto tree = fixtures::random_tree(rng, 3, 3);
    const int T = tree->horizon();
    AdaptedProcess x(tree, std::vector<int>(T + 1, 2));
    for (NodeId n : tree->all_nodes())
      x.set(n, Eigen::Vector2d(u(rng), u(rng)));
    GeneralProcess y(tree);
    for (int t = 0; t <= T; ++t) {
      GeneralProcess::Component c;
      c.time = t;
      c.stage = T;
      c.dim = 2;
      for (NodeId n : tree->leaves()) c.values[n] = Eigen::Vector2d(u(rng), u(rng));
      y.add_component(std::move(c));
    }
    const auto gx = GeneralProcess::from_adapted(x);
    CHECK(pairing(gx, y) ==
          doctest::Approx(pairing(gx, martingale_projection(y))).epsilon(1e-10));
  }
}
