#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace treedual {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using NodeId = int;

// Finite filtered probability space as a rooted tree.  Conditional
// probabilities are stored per node; absolute probabilities are derived.
// Immutable after construction.
class ScenarioTree {
 public:
  struct NodeRecord {
    NodeId id = 0;
    std::optional<NodeId> parent;
    int stage = 0;
    double cond_prob = 1.0;
  };

  // Nodes may arrive in any order; stages are derived from parent depth and
  // all invariants (single root, child probabilities summing to one,
  // positive mass everywhere) are enforced here.
  explicit ScenarioTree(std::vector<NodeRecord> nodes);

  int horizon() const { return horizon_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  NodeId root() const { return order_.front(); }

  bool has_node(NodeId id) const { return index_.count(id) > 0; }
  const NodeRecord& node(NodeId id) const;
  int stage(NodeId id) const { return node(id).stage; }
  std::optional<NodeId> parent(NodeId id) const { return node(id).parent; }
  const std::vector<NodeId>& children(NodeId id) const;
  // Nodes of one stage, ordered by id.
  const std::vector<NodeId>& stage_nodes(int t) const;
  // All nodes ordered by (stage, id).
  const std::vector<NodeId>& all_nodes() const { return order_; }
  std::vector<NodeId> leaves() const { return stage_nodes(horizon_); }

  double cond_prob(NodeId id) const { return node(id).cond_prob; }
  // Ancestor of `id` at stage t <= stage(id).
  NodeId ancestor(NodeId id, int t) const;
  // Root path root=path[0], ..., id=path.back().
  std::vector<NodeId> path(NodeId id) const;

 private:
  std::vector<NodeRecord> nodes_;
  std::map<NodeId, int> index_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::vector<NodeId>> by_stage_;
  std::vector<NodeId> order_;
  int horizon_ = 0;
};

using TreePtr = std::shared_ptr<const ScenarioTree>;

// Product of conditional probabilities along the root path (root -> 1).
double node_probability(const ScenarioTree& tree, NodeId id);

// Node-indexed vector process.  A process may be defined on all stages or
// only on a subset (a stage slice); operations state what they need.
class AdaptedProcess {
 public:
  AdaptedProcess(TreePtr tree, std::vector<int> dims);
  // Single-stage slice.
  static AdaptedProcess slice(TreePtr tree, int stage, int dim,
                              std::map<NodeId, Eigen::VectorXd> values);
  static AdaptedProcess constant(TreePtr tree, const Eigen::VectorXd& value);

  const TreePtr& tree() const { return tree_; }
  const std::vector<int>& dims() const { return dims_; }
  int dim(int stage) const { return dims_.at(stage); }

  bool defined(int stage) const { return defined_.at(stage); }
  bool fully_defined() const;
  // Smallest/largest stage carrying values.
  int first_defined_stage() const;
  int last_defined_stage() const;

  void set(NodeId id, const Eigen::VectorXd& value);
  const Eigen::VectorXd& value(NodeId id) const;
  double scalar(NodeId id) const;

  void validate() const;  // every defined stage has a value at every node

 private:
  TreePtr tree_;
  std::vector<int> dims_;
  std::vector<char> defined_;
  std::map<NodeId, Eigen::VectorXd> values_;
};

// E[x_t]: probability-weighted sum over the nodes of one stage (scalar
// processes only).  The one-argument overload uses the last defined stage.
double expectation(const AdaptedProcess& p, int stage);
double expectation(const AdaptedProcess& p);

// E_t of the stage-`from_stage` slice (default: last defined stage);
// returns a stage-`to_stage` slice.
AdaptedProcess conditional_expectation(const AdaptedProcess& p, int to_stage,
                                       int from_stage = -1);

// E_t y_{t+1} = y_t at every internal node, within tol (max norm).
bool is_martingale(const AdaptedProcess& y, double tol = 1e-9);

// A time-indexed family of random vectors on the tree.  Component t is
// measurable at `stage` >= t (values indexed by stage-`stage` nodes), so
// non-adapted processes are representable; adapted ones use stage == t.
class GeneralProcess {
 public:
  struct Component {
    int time = 0;
    int stage = 0;  // measurability stage, >= time
    int dim = 0;
    std::map<NodeId, Eigen::VectorXd> values;
  };

  GeneralProcess() = default;
  explicit GeneralProcess(TreePtr tree) : tree_(std::move(tree)) {}
  static GeneralProcess from_adapted(const AdaptedProcess& p);

  const TreePtr& tree() const { return tree_; }
  void add_component(Component c);
  bool has_time(int t) const;
  const Component& component(int t) const;
  const std::vector<Component>& components() const { return components_; }
  void validate() const;

 private:
  TreePtr tree_;
  std::vector<Component> components_;
};

// The projection pi: (y_t) -> (E_t y_t).  Output components sit at their
// own time's stage; the result is adapted by construction.
GeneralProcess martingale_projection(const GeneralProcess& y);

// y is orthogonal to all adapted processes iff pi(y) = 0.
bool is_orthogonal_to_adapted(const GeneralProcess& y, double tol = 1e-9);

// E sum_t x_t . y_t with components paired at their common refinement.
double pairing(const GeneralProcess& u, const GeneralProcess& y);

}  // namespace treedual
