#include "treedual/json_io.hpp"

#include <fstream>
#include <sstream>

namespace treedual::io {

namespace {

using Eigen::VectorXd;

VectorXd vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(where + ": expected numbers");
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

NodeId node_key(const std::string& key, const std::string& where) {
  try {
    size_t pos = 0;
    const int id = std::stoi(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
    return id;
  } catch (const std::exception&) {
    throw ValidationError(where + ": node key '" + key + "' is not an integer id");
  }
}

const json& need(const json& j, const char* field, const std::string& where) {
  auto it = j.find(field);
  if (it == j.end())
    throw ValidationError(where + ": missing field '" + field + "'");
  return *it;
}

}  // namespace

json ext_to_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? json("+inf") : json("-inf");
}

double ext_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "+inf" || s == "inf") return polyconvex::kPlusInf;
    if (s == "-inf") return polyconvex::kMinusInf;
  }
  throw ValidationError("expected a number or '+inf'/'-inf'");
}

TreePtr tree_from_json(const json& j) {
  const std::string where = "tree";
  const json& nodes = need(j, "nodes", where);
  if (!nodes.is_array() || nodes.empty())
    throw ValidationError(where + ": 'nodes' must be a nonempty array");
  std::vector<ScenarioTree::NodeRecord> recs;
  for (const json& nj : nodes) {
    ScenarioTree::NodeRecord r;
    r.id = need(nj, "id", where + ".nodes[]").get<int>();
    const json& parent = need(nj, "parent", where + ".nodes[]");
    if (!parent.is_null()) r.parent = parent.get<int>();
    r.cond_prob = need(nj, "cond_prob", where + ".nodes[]").get<double>();
    recs.push_back(r);
  }
  auto tree = std::make_shared<ScenarioTree>(std::move(recs));
  if (j.contains("horizon") && j["horizon"].get<int>() != tree->horizon())
    throw ValidationError(where + ": declared horizon " +
                          std::to_string(j["horizon"].get<int>()) +
                          " does not match the node depth " +
                          std::to_string(tree->horizon()));
  return tree;
}

json tree_to_json(const ScenarioTree& tree) {
  json nodes = json::array();
  for (NodeId id : tree.all_nodes()) {
    const auto& n = tree.node(id);
    json nj{{"id", n.id}, {"cond_prob", n.cond_prob}};
    nj["parent"] = n.parent ? json(*n.parent) : json(nullptr);
    nodes.push_back(nj);
  }
  return json{{"horizon", tree.horizon()}, {"nodes", nodes}};
}

AdaptedProcess adapted_process_from_json(const json& j, TreePtr tree) {
  const std::string where =
      j.contains("name") ? j["name"].get<std::string>() : std::string("process");
  const json& dims = need(j, "dims", where);
  if (!dims.is_array() || static_cast<int>(dims.size()) != tree->horizon() + 1)
    throw ValidationError(where + ": 'dims' must list one entry per stage");
  std::vector<int> d;
  for (const json& x : dims) d.push_back(x.get<int>());
  AdaptedProcess p(tree, d);
  for (const auto& [key, val] : need(j, "values", where).items()) {
    const NodeId id = node_key(key, where);
    if (!tree->has_node(id))
      throw ValidationError(where + ": unknown node id " + std::to_string(id));
    p.set(id, vector_from_json(val, where + ".values[" + key + "]"));
  }
  p.validate();
  return p;
}

json adapted_process_to_json(const AdaptedProcess& p, const std::string& name) {
  json values = json::object();
  for (int t = 0; t <= p.tree()->horizon(); ++t) {
    if (!p.defined(t)) continue;
    for (NodeId n : p.tree()->stage_nodes(t))
      values[std::to_string(n)] = vector_to_json(p.value(n));
  }
  return json{{"name", name}, {"dims", p.dims()}, {"values", values}};
}

GeneralProcess general_process_from_json(const json& j, TreePtr tree) {
  const std::string where =
      j.contains("name") ? j["name"].get<std::string>() : std::string("general process");
  GeneralProcess g(tree);
  for (const json& cj : need(j, "components", where)) {
    GeneralProcess::Component c;
    c.time = need(cj, "time", where).get<int>();
    c.stage = need(cj, "stage", where).get<int>();
    c.dim = need(cj, "dim", where).get<int>();
    for (const auto& [key, val] : need(cj, "values", where).items())
      c.values[node_key(key, where)] = vector_from_json(val, where + ".values");
    g.add_component(std::move(c));
  }
  return g;
}

json general_process_to_json(const GeneralProcess& p, const std::string& name) {
  json comps = json::array();
  for (const auto& c : p.components()) {
    json values = json::object();
    for (const auto& [id, v] : c.values) values[std::to_string(id)] = vector_to_json(v);
    comps.push_back(json{
        {"time", c.time}, {"stage", c.stage}, {"dim", c.dim}, {"values", values}});
  }
  return json{{"name", name}, {"components", comps}};
}

polyconvex::Polyhedron polyhedron_from_json(const json& j, int dim) {
  polyconvex::Polyhedron S;
  S.dim = dim;
  auto rows = [&](const char* field, auto push) {
    if (!j.contains(field)) return;
    for (const json& row : j[field]) {
      VectorXd r = vector_from_json(row, field);
      if (r.size() != dim + 1)
        throw ValidationError(std::string(field) +
                              ": each row must list the coefficients then the bound");
      push(VectorXd(r.head(dim)), r[dim]);
    }
  };
  rows("ineq", [&](VectorXd g, double h) { S.add_ineq(g, h); });
  rows("eq", [&](VectorXd g, double h) { S.add_eq(g, h); });
  return S;
}

json polyhedron_to_json(const polyconvex::Polyhedron& S) {
  json ineq = json::array(), eq = json::array();
  auto row = [](const VectorXd& g, double h) {
    VectorXd r(g.size() + 1);
    r.head(g.size()) = g;
    r[g.size()] = h;
    return vector_to_json(r);
  };
  for (const auto& [g, h] : S.ineqs) ineq.push_back(row(g, h));
  for (const auto& [g, h] : S.eqs) eq.push_back(row(g, h));
  return json{{"dim", S.dim}, {"ineq", ineq}, {"eq", eq}};
}

polyconvex::PolyhedralFunction polyhedral_function_from_json(const json& j) {
  polyconvex::PolyhedralFunction f;
  f.dim = need(j, "dim", "function").get<int>();
  if (j.contains("pieces")) {
    for (const json& row : j["pieces"]) {
      VectorXd r = vector_from_json(row, "pieces");
      if (r.size() != f.dim + 1)
        throw ValidationError("pieces: each row must list the gradient then the offset");
      f.pieces.emplace_back(r.head(f.dim), r[f.dim]);
    }
  }
  f.domain = polyhedron_from_json(j, f.dim);
  return f;
}

json polyhedral_function_to_json(const polyconvex::PolyhedralFunction& f) {
  json pieces = json::array();
  for (const auto& [a, b] : f.pieces) {
    VectorXd r(f.dim + 1);
    r.head(f.dim) = a;
    r[f.dim] = b;
    pieces.push_back(vector_to_json(r));
  }
  json out = polyhedron_to_json(f.domain);
  out["pieces"] = pieces;
  return out;
}

json lp_to_json(const lp::LinearProgram& p) {
  json rows = json::array();
  for (const auto& r : p.rows)
    rows.push_back(json{{"coeffs", vector_to_json(r.coeffs)},
                        {"sense", r.sense == lp::Sense::LessEqual ? "<=" : "="},
                        {"rhs", r.rhs}});
  json bounds = json::array();
  for (const auto& b : p.bounds)
    bounds.push_back(json{{"lower", b.lower ? json(*b.lower) : json(nullptr)},
                          {"upper", b.upper ? json(*b.upper) : json(nullptr)}});
  return json{
      {"objective", vector_to_json(p.objective)}, {"rows", rows}, {"bounds", bounds}};
}

lp::LinearProgram lp_from_json(const json& j) {
  lp::LinearProgram p;
  p.objective = vector_from_json(need(j, "objective", "lp"), "lp.objective");
  p.bounds.resize(p.objective.size());
  if (j.contains("bounds")) {
    const json& bs = j["bounds"];
    for (size_t i = 0; i < bs.size() && i < p.bounds.size(); ++i) {
      if (!bs[i]["lower"].is_null()) p.bounds[i].lower = bs[i]["lower"].get<double>();
      if (!bs[i]["upper"].is_null()) p.bounds[i].upper = bs[i]["upper"].get<double>();
    }
  }
  for (const json& rj : need(j, "rows", "lp")) {
    const std::string sense = need(rj, "sense", "lp.rows").get<std::string>();
    p.add_row(vector_from_json(need(rj, "coeffs", "lp.rows"), "lp.rows.coeffs"),
              sense == "<=" ? lp::Sense::LessEqual : lp::Sense::Equal,
              need(rj, "rhs", "lp.rows").get<double>());
  }
  return p;
}

std::string kind_of(const json& j) {
  const std::string v = need(j, "format_version", "problem").get<std::string>();
  if (v != "1") throw ValidationError("unsupported format_version '" + v + "'");
  return need(j, "kind", "problem").get<std::string>();
}

ProgramFile program_from_json(const json& j) {
  ProgramFile file;
  auto tree = tree_from_json(need(j, "tree", "program"));
  file.program.tree = tree;
  for (const json& x : need(j, "stage_dims", "program"))
    file.program.stage_dims.push_back(x.get<int>());
  for (const json& x : need(j, "param_dims", "program"))
    file.program.param_dims.push_back(x.get<int>());
  file.program.parameter =
      j.contains("parameter")
          ? general_process_from_json(j["parameter"], tree)
          : GeneralProcess(tree);
  for (const json& oj : need(j, "objectives", "program")) {
    const NodeId node = need(oj, "node", "program.objectives").get<int>();
    if (!tree->has_node(node))
      throw ValidationError("program.objectives: unknown node id " +
                            std::to_string(node));
    auto f = polyhedral_function_from_json(need(oj, "fn", "program.objectives"));
    if (oj.contains("u_times")) {
      std::vector<int> times;
      for (const json& t : oj["u_times"]) times.push_back(t.get<int>());
      file.program.attach(node, std::move(f), std::move(times));
    } else {
      file.program.attach(node, std::move(f));
    }
  }
  file.program.validate();
  return file;
}

MarketFile market_from_json(const json& j) {
  MarketFile file;
  auto tree = tree_from_json(need(j, "tree", "market"));
  const int assets = need(j, "assets", "market").get<int>();

  if (j.contains("liquid_prices")) {
    file.model =
        market::MarketModel::liquid(tree, adapted_process_from_json(j["liquid_prices"], tree));
    if (file.model.assets != assets)
      throw ValidationError("market: 'assets' must equal price dimension + 1");
  } else if (j.contains("cost_functions")) {
    std::map<NodeId, polyconvex::PolyhedralFunction> cost;
    for (const auto& [key, fj] : j["cost_functions"].items())
      cost[node_key(key, "market.cost_functions")] = polyhedral_function_from_json(fj);
    file.model = market::MarketModel::from_cost_functions(tree, assets, cost);
  } else {
    file.model.tree = tree;
    file.model.assets = assets;
    file.model.conical = j.value("conical", false);
    const json& cones = need(j, "cones", "market");
    for (const auto& [key, cj] : cones.items()) {
      const NodeId id = node_key(key, "market.cones");
      file.model.C[id] = polyhedron_from_json(need(cj, "C", "market.cones"), assets);
      if (cj.contains("D"))
        file.model.D[id] = polyhedron_from_json(cj["D"], assets);
    }
  }
  if (j.contains("conical")) file.model.conical = j["conical"].get<bool>();

  if (j.contains("claim"))
    file.claim = adapted_process_from_json(j["claim"], tree);
  if (j.contains("premium"))
    file.premium = adapted_process_from_json(j["premium"], tree);
  if (j.contains("endowment"))
    file.endowment = adapted_process_from_json(j["endowment"], tree);
  if (j.contains("neg_utilities"))
    for (const auto& [key, fj] : j["neg_utilities"].items())
      file.neg_utilities[node_key(key, "market.neg_utilities")] =
          polyhedral_function_from_json(fj);
  file.model.validate();
  return file;
}

StoppingFile stopping_from_json(const json& j) {
  auto tree = tree_from_json(need(j, "tree", "stopping"));
  AdaptedProcess reward = adapted_process_from_json(need(j, "reward", "stopping"), tree);
  StoppingFile file{stopping::StoppingProblem{tree, std::move(reward)}};
  file.problem.validate();
  return file;
}

BolzaFile bolza_from_json(const json& j) {
  auto tree = tree_from_json(need(j, "tree", "bolza"));
  std::map<NodeId, polyconvex::PolyhedralFunction> integrands;
  for (const auto& [key, fj] : need(j, "integrands", "bolza").items())
    integrands[node_key(key, "bolza.integrands")] = polyhedral_function_from_json(fj);
  AdaptedProcess y = adapted_process_from_json(need(j, "y", "bolza"), tree);
  return BolzaFile{tree, std::move(integrands), std::move(y)};
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file");
  std::uint64_t hash = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << hash;
  return os.str();
}

}  // namespace treedual::io
