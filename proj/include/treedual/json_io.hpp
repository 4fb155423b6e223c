#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "treedual/duality.hpp"
#include "treedual/lp.hpp"
#include "treedual/market.hpp"
#include "treedual/polyconvex.hpp"
#include "treedual/scenario_tree.hpp"
#include "treedual/stopping.hpp"

namespace treedual::io {

using nlohmann::json;

// Extended reals: finite numbers stay numbers, infinities become the
// strings "+inf" / "-inf".
json ext_to_json(double v);
double ext_from_json(const json& j);

// Tree: {"horizon": T, "nodes": [{"id", "parent", "cond_prob"}...]};
// stages are inferred from parent depth.
TreePtr tree_from_json(const json& j);
json tree_to_json(const ScenarioTree& tree);

// Process: {"name", "dims": [n_0..n_T], "values": {"<node id>": [..]}}.
// Stages may be left out entirely (slices) but never partially.
AdaptedProcess adapted_process_from_json(const json& j, TreePtr tree);
json adapted_process_to_json(const AdaptedProcess& p, const std::string& name);

// General process: {"name", "components": [{"time","stage","dim","values"}]}.
GeneralProcess general_process_from_json(const json& j, TreePtr tree);
json general_process_to_json(const GeneralProcess& p, const std::string& name);

// Function: {"dim", "pieces": [[a..,b]..], "ineq": [[g..,h]..], "eq": [..]}.
polyconvex::PolyhedralFunction polyhedral_function_from_json(const json& j);
json polyhedral_function_to_json(const polyconvex::PolyhedralFunction& f);

polyconvex::Polyhedron polyhedron_from_json(const json& j, int dim);
json polyhedron_to_json(const polyconvex::Polyhedron& S);

// Minimal LP dump mirroring LinearProgram; debugging only.
json lp_to_json(const lp::LinearProgram& lp);
lp::LinearProgram lp_from_json(const json& j);

// Problem files: {"format_version": "1", "kind": ..., ...payload}.
struct ProgramFile {
  duality::StochasticProgram program;
};

struct MarketFile {
  market::MarketModel model;
  std::optional<AdaptedProcess> claim;
  std::optional<AdaptedProcess> premium;
  std::map<NodeId, polyconvex::PolyhedralFunction> neg_utilities;
  std::optional<AdaptedProcess> endowment;
};

struct StoppingFile {
  stopping::StoppingProblem problem;
};

struct BolzaFile {
  TreePtr tree;
  std::map<NodeId, polyconvex::PolyhedralFunction> integrands;
  AdaptedProcess y;
};

std::string kind_of(const json& j);
ProgramFile program_from_json(const json& j);
MarketFile market_from_json(const json& j);
StoppingFile stopping_from_json(const json& j);
BolzaFile bolza_from_json(const json& j);

// Reads and parses a file, decorating parse errors with the path.
json load_json_file(const std::string& path);

// FNV-1a 64-bit content digest, hex-encoded.
std::string file_digest(const std::string& path);

}  // namespace treedual::io
