#include "treedual/scenario_tree.hpp"

#include <algorithm>
#include <cmath>

namespace treedual {

namespace {
std::string node_str(NodeId id) { return "node " + std::to_string(id); }
}  // namespace

ScenarioTree::ScenarioTree(std::vector<NodeRecord> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ValidationError("tree has no nodes");

  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second)
      throw ValidationError("duplicate " + node_str(nodes_[i].id));
  }

  // Derive stages from parent depth.
  int roots = 0;
  for (auto& n : nodes_) {
    if (!n.parent) ++roots;
    if (n.cond_prob <= 0.0 || n.cond_prob > 1.0 + 1e-12)
      throw ValidationError(node_str(n.id) + ": cond_prob must lie in (0,1]");
  }
  if (roots != 1) throw ValidationError("tree must have exactly one root");

  for (auto& n : nodes_) {
    int depth = 0;
    NodeId cur = n.id;
    std::map<NodeId, int>::iterator it;
    while (true) {
      it = index_.find(cur);
      if (it == index_.end())
        throw ValidationError(node_str(cur) + ": unknown parent reference");
      const auto& rec = nodes_[it->second];
      if (!rec.parent) break;
      cur = *rec.parent;
      if (++depth > static_cast<int>(nodes_.size()))
        throw ValidationError("parent cycle at " + node_str(n.id));
    }
    n.stage = depth;
  }

  horizon_ = 0;
  for (const auto& n : nodes_) horizon_ = std::max(horizon_, n.stage);

  children_.resize(nodes_.size());
  for (const auto& n : nodes_) {
    if (n.parent) {
      const auto& prec = node(*n.parent);
      if (n.stage != prec.stage + 1)
        throw ValidationError(node_str(n.id) + ": stage must be parent stage + 1");
      children_[index_.at(*n.parent)].push_back(n.id);
    }
  }
  for (auto& c : children_) std::sort(c.begin(), c.end());

  by_stage_.resize(horizon_ + 1);
  for (const auto& n : nodes_) by_stage_[n.stage].push_back(n.id);
  for (auto& s : by_stage_) std::sort(s.begin(), s.end());
  for (const auto& s : by_stage_)
    for (NodeId id : s) order_.push_back(id);

  if (node(root()).cond_prob != 1.0 && std::abs(node(root()).cond_prob - 1.0) > 1e-12)
    throw ValidationError("root cond_prob must be 1");

  for (const auto& n : nodes_) {
    const auto& kids = children_[index_.at(n.id)];
    if (n.stage < horizon_ && kids.empty())
      throw ValidationError(node_str(n.id) + ": interior node has no children");
    if (!kids.empty()) {
      double sum = 0.0;
      for (NodeId c : kids) sum += cond_prob(c);
      if (std::abs(sum - 1.0) > 1e-12)
        throw ValidationError(node_str(n.id) + ": child cond_probs sum to " +
                              std::to_string(sum) + ", expected 1");
    }
  }
}

const ScenarioTree::NodeRecord& ScenarioTree::node(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown " + node_str(id));
  return nodes_[it->second];
}

const std::vector<NodeId>& ScenarioTree::children(NodeId id) const {
  return children_[index_.at(node(id).id)];
}

const std::vector<NodeId>& ScenarioTree::stage_nodes(int t) const {
  if (t < 0 || t > horizon_) throw ValidationError("stage out of range");
  return by_stage_[t];
}

NodeId ScenarioTree::ancestor(NodeId id, int t) const {
  const NodeRecord* n = &node(id);
  if (t > n->stage) throw ValidationError("ancestor stage above node stage");
  while (n->stage > t) n = &node(*n->parent);
  return n->id;
}

std::vector<NodeId> ScenarioTree::path(NodeId id) const {
  std::vector<NodeId> p;
  const NodeRecord* n = &node(id);
  while (true) {
    p.push_back(n->id);
    if (!n->parent) break;
    n = &node(*n->parent);
  }
  std::reverse(p.begin(), p.end());
  return p;
}

double node_probability(const ScenarioTree& tree, NodeId id) {
  double p = 1.0;
  for (NodeId n : tree.path(id)) p *= tree.cond_prob(n);
  return p;
}

AdaptedProcess::AdaptedProcess(TreePtr tree, std::vector<int> dims)
    : tree_(std::move(tree)), dims_(std::move(dims)) {
  if (static_cast<int>(dims_.size()) != tree_->horizon() + 1)
    throw ValidationError("process dims must have horizon+1 entries");
  defined_.assign(dims_.size(), 0);
}

AdaptedProcess AdaptedProcess::slice(TreePtr tree, int stage, int dim,
                                     std::map<NodeId, Eigen::VectorXd> values) {
  std::vector<int> dims(tree->horizon() + 1, 0);
  dims.at(stage) = dim;
  AdaptedProcess p(tree, dims);
  for (auto& [id, v] : values) p.set(id, v);
  if (!p.defined(stage)) throw ValidationError("slice missing node values");
  return p;
}

AdaptedProcess AdaptedProcess::constant(TreePtr tree, const Eigen::VectorXd& value) {
  std::vector<int> dims(tree->horizon() + 1, static_cast<int>(value.size()));
  AdaptedProcess p(tree, dims);
  for (NodeId id : tree->all_nodes()) p.set(id, value);
  return p;
}

bool AdaptedProcess::fully_defined() const {
  for (char d : defined_)
    if (!d) return false;
  return true;
}

int AdaptedProcess::first_defined_stage() const {
  for (int t = 0; t < static_cast<int>(defined_.size()); ++t)
    if (defined_[t]) return t;
  throw ValidationError("process has no values");
}

int AdaptedProcess::last_defined_stage() const {
  for (int t = static_cast<int>(defined_.size()) - 1; t >= 0; --t)
    if (defined_[t]) return t;
  throw ValidationError("process has no values");
}

void AdaptedProcess::set(NodeId id, const Eigen::VectorXd& value) {
  const int t = tree_->stage(id);
  if (value.size() != dims_[t])
    throw ValidationError("value dimension mismatch at node " + std::to_string(id));
  values_[id] = value;
  bool all = true;
  for (NodeId n : tree_->stage_nodes(t))
    if (!values_.count(n)) all = false;
  defined_[t] = all;
}

const Eigen::VectorXd& AdaptedProcess::value(NodeId id) const {
  auto it = values_.find(id);
  if (it == values_.end())
    throw ValidationError("no value at node " + std::to_string(id));
  return it->second;
}

double AdaptedProcess::scalar(NodeId id) const {
  const Eigen::VectorXd& v = value(id);
  if (v.size() != 1) throw ValidationError("scalar access on vector process");
  return v[0];
}

void AdaptedProcess::validate() const {
  for (int t = 0; t <= tree_->horizon(); ++t) {
    int have = 0;
    for (NodeId n : tree_->stage_nodes(t)) have += values_.count(n) ? 1 : 0;
    if (have != 0 && have != static_cast<int>(tree_->stage_nodes(t).size()))
      throw ValidationError("stage " + std::to_string(t) +
                            " is only partially populated");
  }
}

double expectation(const AdaptedProcess& p, int stage) {
  if (!p.defined(stage)) throw ValidationError("stage has no values");
  if (p.dim(stage) != 1) throw ValidationError("expectation needs scalar values");
  double e = 0.0;
  for (NodeId n : p.tree()->stage_nodes(stage))
    e += node_probability(*p.tree(), n) * p.scalar(n);
  return e;
}

double expectation(const AdaptedProcess& p) {
  return expectation(p, p.last_defined_stage());
}

AdaptedProcess conditional_expectation(const AdaptedProcess& p, int to_stage,
                                       int from_stage) {
  const int s = from_stage < 0 ? p.last_defined_stage() : from_stage;
  if (!p.defined(s)) throw ValidationError("source stage has no values");
  if (to_stage > s) throw ValidationError("conditional expectation needs t <= s");
  const ScenarioTree& tree = *p.tree();
  const int dim = p.dim(s);

  // One backward step at a time: E_t = E_t E_{t+1} ... E_{s-1}.
  std::map<NodeId, Eigen::VectorXd> cur;
  for (NodeId n : tree.stage_nodes(s)) cur[n] = p.value(n);
  for (int t = s; t > to_stage; --t) {
    std::map<NodeId, Eigen::VectorXd> up;
    for (NodeId n : tree.stage_nodes(t - 1)) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
      for (NodeId c : tree.children(n)) acc += tree.cond_prob(c) * cur.at(c);
      up[n] = acc;
    }
    cur = std::move(up);
  }
  return AdaptedProcess::slice(p.tree(), to_stage, dim, std::move(cur));
}

bool is_martingale(const AdaptedProcess& y, double tol) {
  const ScenarioTree& tree = *y.tree();
  if (!y.fully_defined()) throw ValidationError("martingale test needs all stages");
  for (int t = 1; t <= tree.horizon(); ++t)
    if (y.dim(t) != y.dim(0))
      throw ValidationError("martingale test needs constant dimension");
  for (int t = 0; t < tree.horizon(); ++t) {
    for (NodeId n : tree.stage_nodes(t)) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(y.dim(0));
      for (NodeId c : tree.children(n)) acc += tree.cond_prob(c) * y.value(c);
      if ((acc - y.value(n)).lpNorm<Eigen::Infinity>() > tol) return false;
    }
  }
  return true;
}

GeneralProcess GeneralProcess::from_adapted(const AdaptedProcess& p) {
  GeneralProcess g(p.tree());
  for (int t = 0; t <= p.tree()->horizon(); ++t) {
    if (!p.defined(t)) continue;
    Component c;
    c.time = t;
    c.stage = t;
    c.dim = p.dim(t);
    for (NodeId n : p.tree()->stage_nodes(t)) c.values[n] = p.value(n);
    g.add_component(std::move(c));
  }
  return g;
}

void GeneralProcess::add_component(Component c) {
  if (c.stage < c.time) throw ValidationError("component stage below its time");
  if (c.stage > tree_->horizon()) throw ValidationError("component stage beyond horizon");
  for (NodeId n : tree_->stage_nodes(c.stage)) {
    auto it = c.values.find(n);
    if (it == c.values.end())
      throw ValidationError("component missing value at node " + std::to_string(n));
    if (it->second.size() != c.dim)
      throw ValidationError("component dimension mismatch at node " + std::to_string(n));
  }
  for (const auto& existing : components_)
    if (existing.time == c.time)
      throw ValidationError("duplicate component for time " + std::to_string(c.time));
  components_.push_back(std::move(c));
  std::sort(components_.begin(), components_.end(),
            [](const Component& a, const Component& b) { return a.time < b.time; });
}

bool GeneralProcess::has_time(int t) const {
  for (const auto& c : components_)
    if (c.time == t) return true;
  return false;
}

const GeneralProcess::Component& GeneralProcess::component(int t) const {
  for (const auto& c : components_)
    if (c.time == t) return c;
  throw ValidationError("no component for time " + std::to_string(t));
}

void GeneralProcess::validate() const {
  if (!tree_) throw ValidationError("general process without a tree");
}

GeneralProcess martingale_projection(const GeneralProcess& y) {
  GeneralProcess out(y.tree());
  for (const auto& c : y.components()) {
    AdaptedProcess s =
        AdaptedProcess::slice(y.tree(), c.stage, c.dim, c.values);
    AdaptedProcess e = conditional_expectation(s, c.time, c.stage);
    GeneralProcess::Component pc;
    pc.time = c.time;
    pc.stage = c.time;
    pc.dim = c.dim;
    for (NodeId n : y.tree()->stage_nodes(c.time)) pc.values[n] = e.value(n);
    out.add_component(std::move(pc));
  }
  return out;
}

bool is_orthogonal_to_adapted(const GeneralProcess& y, double tol) {
  GeneralProcess p = martingale_projection(y);
  for (const auto& c : p.components())
    for (const auto& [id, v] : c.values)
      if (v.lpNorm<Eigen::Infinity>() > tol) return false;
  return true;
}

double pairing(const GeneralProcess& u, const GeneralProcess& y) {
  const ScenarioTree& tree = *u.tree();
  double total = 0.0;
  for (const auto& uc : u.components()) {
    if (!y.has_time(uc.time)) continue;
    const auto& yc = y.component(uc.time);
    if (yc.dim != uc.dim) throw ValidationError("pairing dimension mismatch");
    const int s = std::max(uc.stage, yc.stage);
    for (NodeId n : tree.stage_nodes(s)) {
      const Eigen::VectorXd& uv = uc.values.at(tree.ancestor(n, uc.stage));
      const Eigen::VectorXd& yv = yc.values.at(tree.ancestor(n, yc.stage));
      total += node_probability(tree, n) * uv.dot(yv);
    }
  }
  return total;
}

}  // namespace treedual
