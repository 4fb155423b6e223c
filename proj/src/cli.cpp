#include "treedual/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "treedual/json_io.hpp"

namespace treedual::cli {

namespace {

using io::json;
using polyconvex::kMinusInf;
using polyconvex::kPlusInf;

struct Options {
  std::string problem, market, tree, reward, penalty = "snell", dual_class = "full";
  double tol = 1e-6;
  int mc = 0;
  bool seed_given = false;
  std::uint64_t seed = 0;
  bool json_output = false;
};

struct Report {
  json body = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Report(const std::string& command, const Options& opt) {
    body["command"] = command;
    body["inputs"] = json::object();
    body["tolerances"] = json{{"gap", opt.tol}, {"feasibility", 1e-8}, {"pivot", 1e-10}};
    body["values"] = json::object();
    body["solutions"] = json::object();
    body["solver"] = json{{"engine", "two-phase revised simplex, Bland pivoting"}};
  }

  void input(const std::string& role, const std::string& path) {
    body["inputs"][role] = json{{"path", path}, {"digest", io::file_digest(path)}};
  }

  void finish(const Options& opt, std::ostream& out) {
    const auto ms = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count() /
                    1000.0;
    body["wall_time_ms"] = ms;
    if (opt.json_output) {
      out << body.dump(2) << "\n";
      return;
    }
    out << "== " << body["command"].get<std::string>() << " ==\n";
    for (const auto& [key, val] : body["values"].items())
      out << "  " << std::left << std::setw(28) << key
          << (val.is_string() ? val.get<std::string>() : val.dump()) << "\n";
    if (!body["solutions"].empty()) {
      out << "  solutions: ";
      bool first = true;
      for (const auto& [key, val] : body["solutions"].items()) {
        out << (first ? "" : ", ") << key;
        first = false;
      }
      out << "\n";
    }
    out << "  wall_time_ms " << ms << "\n";
  }
};

json gap_values(const duality::GapReport& rep, double tol) {
  const double scale = std::max(1.0, std::abs(rep.primal_value));
  return json{{"primal", io::ext_to_json(rep.primal_value)},
              {"dual", io::ext_to_json(rep.dual_value)},
              {"gap", io::ext_to_json(rep.gap)},
              {"within_tolerance",
               std::isfinite(rep.gap) && std::abs(rep.gap) <= tol * scale},
              {"statuses", rep.statuses}};
}

io::ProgramFile load_program(const Options& opt, Report& rep) {
  if (opt.problem.empty()) throw ValidationError("--problem FILE is required");
  rep.input("problem", opt.problem);
  json j = io::load_json_file(opt.problem);
  if (io::kind_of(j) != "program")
    throw ValidationError(opt.problem + ": expected kind 'program'");
  return io::program_from_json(j);
}

io::MarketFile load_market(const Options& opt, Report& rep, const char* kind) {
  if (opt.market.empty()) throw ValidationError("--market FILE is required");
  rep.input("market", opt.market);
  json j = io::load_json_file(opt.market);
  const std::string k = io::kind_of(j);
  if (k != kind && k != "market")
    throw ValidationError(opt.market + ": expected kind '" + kind + "'");
  return io::market_from_json(j);
}

int cmd_solve(const Options& opt, std::ostream& out) {
  Report rep("solve", opt);
  auto file = load_program(opt, rep);
  auto res = duality::solve_primal(file.program);
  rep.body["values"] = json{{"primal", io::ext_to_json(res.value)},
                            {"status", lp::to_string(res.status)}};
  rep.body["solver"]["verified"] = res.lp_check.ok();
  if (res.solution)
    rep.body["solutions"]["x"] = io::adapted_process_to_json(*res.solution, "x");
  rep.finish(opt, out);
  return res.status == lp::SolveStatus::Optimal ? 0 : 1;
}

int cmd_dual(const Options& opt, std::ostream& out) {
  Report rep("dual", opt);
  auto file = load_program(opt, rep);
  auto gap = duality::duality_gap(file.program,
                                  duality::dual_class_from_string(opt.dual_class));
  const double g = gap.dual_value - pairing(file.program.parameter, gap.dual_solution);
  rep.body["values"] = json{
      {"dual", io::ext_to_json(gap.dual_value)},
      {"dual_objective", io::ext_to_json(std::isfinite(gap.dual_value) ? g : gap.dual_value)},
      {"pairing", pairing(file.program.parameter, gap.dual_solution)},
      {"dual_class", opt.dual_class},
      {"status", gap.statuses.at("dual")}};
  rep.body["solutions"]["y"] = io::general_process_to_json(gap.dual_solution, "y");
  rep.finish(opt, out);
  return std::isfinite(gap.dual_value) ? 0 : 1;
}

int cmd_gap(const Options& opt, std::ostream& out) {
  Report rep("gap", opt);
  auto file = load_program(opt, rep);
  auto gap = duality::duality_gap(file.program,
                                  duality::dual_class_from_string(opt.dual_class));
  rep.body["values"] = gap_values(gap, opt.tol);
  if (gap.primal_solution)
    rep.body["solutions"]["x"] = io::adapted_process_to_json(*gap.primal_solution, "x");
  rep.body["solutions"]["y"] = io::general_process_to_json(gap.dual_solution, "y");
  rep.finish(opt, out);
  return gap.statuses.at("primal") == "optimal" ? 0 : 1;
}

int cmd_superhedge(const Options& opt, std::ostream& out) {
  Report rep("superhedge", opt);
  auto file = load_market(opt, rep, "market");
  if (!file.claim || !file.premium)
    throw ValidationError("market file must provide 'claim' and 'premium' processes");
  auto res = market::superhedge_cost(file.model, *file.claim, *file.premium);
  rep.body["values"] = gap_values(res, opt.tol);
  rep.body["values"]["cost"] = io::ext_to_json(res.primal_value);
  if (res.primal_solution)
    rep.body["solutions"]["hedge"] =
        io::adapted_process_to_json(*res.primal_solution, "hedge");
  rep.body["solutions"]["price_system"] =
      io::general_process_to_json(res.dual_solution, "y");
  rep.finish(opt, out);
  return std::isfinite(res.primal_value) &&
                 res.statuses.at("primal").find("rejected") == std::string::npos
             ? 0
             : 1;
}

int cmd_no_arbitrage(const Options& opt, std::ostream& out) {
  Report rep("no-arbitrage", opt);
  auto file = load_market(opt, rep, "market");
  auto res = market::check_no_arbitrage(file.model);
  rep.body["values"] = json{{"no_arbitrage", res.no_arbitrage}};
  if (res.claim)
    rep.body["solutions"]["claim"] = io::adapted_process_to_json(*res.claim, "claim");
  if (res.hedge)
    rep.body["solutions"]["hedge"] = io::adapted_process_to_json(*res.hedge, "hedge");
  if (res.strict_system)
    rep.body["solutions"]["price_system"] =
        io::adapted_process_to_json(*res.strict_system, "y");
  rep.finish(opt, out);
  return 0;
}

int cmd_ftap(const Options& opt, std::ostream& out) {
  Report rep("ftap", opt);
  auto file = load_market(opt, rep, "market");
  auto res = market::ftap_equivalence(file.model);
  json q = json::object();
  for (const auto& [leaf, p] : res.leaf_measure) q[std::to_string(leaf)] = p;
  rep.body["values"] = json{{"no_arbitrage", res.no_arbitrage},
                            {"martingale_measure_exists", res.martingale_measure_exists},
                            {"agree", res.agree},
                            {"max_martingale_violation", res.max_martingale_violation}};
  rep.body["solutions"]["q"] = q;
  rep.finish(opt, out);
  return res.agree ? 0 : 1;
}

int cmd_consumption(const Options& opt, std::ostream& out) {
  Report rep("consumption", opt);
  auto file = load_market(opt, rep, "consumption");
  if (file.neg_utilities.empty())
    throw ValidationError("market file must provide 'neg_utilities'");
  auto res = market::optimal_consumption(file.model, file.neg_utilities, file.endowment);
  rep.body["values"] = gap_values(res, opt.tol);
  rep.body["values"]["utility"] = io::ext_to_json(res.primal_value);
  if (res.primal_solution)
    rep.body["solutions"]["portfolios"] =
        io::adapted_process_to_json(*res.primal_solution, "x");
  rep.body["solutions"]["price_system"] =
      io::general_process_to_json(res.dual_solution, "y");
  rep.finish(opt, out);
  return res.statuses.at("primal") == "optimal" ? 0 : 1;
}

int cmd_stopping(const Options& opt, std::ostream& out) {
  Report rep("stopping-bound", opt);
  stopping::StoppingProblem sp = [&] {
    if (!opt.problem.empty()) {
      rep.input("problem", opt.problem);
      json j = io::load_json_file(opt.problem);
      if (io::kind_of(j) != "stopping")
        throw ValidationError(opt.problem + ": expected kind 'stopping'");
      return io::stopping_from_json(j).problem;
    }
    if (opt.tree.empty() || opt.reward.empty())
      throw ValidationError("stopping-bound needs --problem or --tree and --reward");
    rep.input("tree", opt.tree);
    rep.input("reward", opt.reward);
    auto tree = io::tree_from_json(io::load_json_file(opt.tree));
    return stopping::StoppingProblem{
        tree, io::adapted_process_from_json(io::load_json_file(opt.reward), tree)};
  }();
  sp.validate();

  auto sol = stopping::solve_stopping_lp(sp);
  AdaptedProcess penalty = [&]() -> AdaptedProcess {
    if (opt.penalty == "snell")
      return stopping::doob_martingale_part(stopping::snell_envelope(sp));
    if (opt.penalty == "zero")
      return AdaptedProcess::constant(sp.tree, Eigen::VectorXd::Zero(1));
    rep.input("penalty", opt.penalty);
    return io::adapted_process_from_json(io::load_json_file(opt.penalty), sp.tree);
  }();
  if (!is_martingale(penalty, 1e-7))
    throw ValidationError("penalty process must be a martingale");

  const double bound = stopping::rogers_bound(sp, penalty);
  rep.body["values"] = json{{"value", sol.value},
                            {"bound", bound},
                            {"gap", bound - sol.value},
                            {"penalty", opt.penalty}};
  rep.body["solver"]["verified"] = sol.lp_check.ok();
  if (opt.mc > 0) {
    if (!opt.seed_given)
      throw ValidationError("--mc requires an explicit --seed (no entropy default)");
    auto mc = stopping::rogers_bound_mc(sp, penalty, opt.mc, opt.seed);
    rep.body["values"]["mc_estimate"] = mc.estimate;
    rep.body["values"]["std_error"] = mc.std_error;
    rep.body["values"]["paths"] = mc.paths;
    rep.body["values"]["seed"] = mc.seed;
  }
  rep.body["solutions"]["dual_martingale"] =
      io::adapted_process_to_json(sol.dual_martingale, "y");
  rep.finish(opt, out);
  return 0;
}

int cmd_check(const Options& opt, std::ostream& out, std::ostream& err) {
  std::string path = !opt.problem.empty()  ? opt.problem
                     : !opt.market.empty() ? opt.market
                     : !opt.tree.empty()   ? opt.tree
                                           : opt.reward;
  if (path.empty())
    throw ValidationError("check needs one of --problem/--market/--tree/--reward");
  Report rep("check", opt);
  rep.input("file", path);
  Diagnostics diag = validate_file(path);
  rep.body["values"] = json{{"errors", diag.errors.size()},
                            {"warnings", diag.warnings.size()}};
  rep.body["solutions"]["diagnostics"] =
      json{{"errors", diag.errors}, {"warnings", diag.warnings}};
  rep.finish(opt, out);
  for (const auto& e : diag.errors) err << "error: " << e << "\n";
  for (const auto& w : diag.warnings) err << "warning: " << w << "\n";
  return diag.errors.empty() ? 0 : 2;
}

}  // namespace

Diagnostics validate_file(const std::string& path) {
  Diagnostics diag;
  try {
    json j = io::load_json_file(path);
    if (j.contains("format_version")) {
      const std::string kind = io::kind_of(j);
      if (kind == "program") {
        io::program_from_json(j);
      } else if (kind == "market" || kind == "consumption") {
        auto file = io::market_from_json(j);
        diag.warnings = file.model.validate();
      } else if (kind == "stopping") {
        io::stopping_from_json(j);
      } else if (kind == "bolza") {
        io::bolza_from_json(j);
      } else {
        diag.errors.push_back(path + ": unknown kind '" + kind + "'");
      }
    } else if (j.contains("nodes")) {
      io::tree_from_json(j);
    } else if (j.contains("dims")) {
      diag.errors.push_back(path +
                            ": a bare process file cannot be validated without its tree");
    } else {
      diag.errors.push_back(path + ": unrecognized file shape");
    }
  } catch (const std::exception& e) {
    diag.errors.push_back(e.what());
  }
  return diag;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scenario-tree convex duality toolkit"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--problem", opt.problem, "problem JSON file");
    sub->add_option("--market", opt.market, "market JSON file");
    sub->add_option("--tree", opt.tree, "tree JSON file");
    sub->add_option("--reward", opt.reward, "reward process JSON file");
    sub->add_flag("--json", opt.json_output, "machine-readable report");
    sub->add_option("--tol", opt.tol, "relative gap tolerance");
    sub->add_option("--mc", opt.mc, "Monte Carlo sample paths");
    sub->add_option("--seed", opt.seed, "Monte Carlo seed")
        ->each([&](const std::string&) { opt.seed_given = true; });
    sub->add_option("--dual-class", opt.dual_class, "full | martingale | orthogonal")
        ->check(CLI::IsMember({"full", "martingale", "orthogonal"}));
    sub->add_option("--penalty", opt.penalty, "snell | zero | FILE");
  };
  for (const char* name : {"solve", "dual", "gap", "superhedge", "no-arbitrage",
                           "ftap", "consumption", "stopping-bound", "check"})
    add_common(app.add_subcommand(name));

  std::vector<const char*> argv{"treedual"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand("solve")) return cmd_solve(opt, out);
    if (app.got_subcommand("dual")) return cmd_dual(opt, out);
    if (app.got_subcommand("gap")) return cmd_gap(opt, out);
    if (app.got_subcommand("superhedge")) return cmd_superhedge(opt, out);
    if (app.got_subcommand("no-arbitrage")) return cmd_no_arbitrage(opt, out);
    if (app.got_subcommand("ftap")) return cmd_ftap(opt, out);
    if (app.got_subcommand("consumption")) return cmd_consumption(opt, out);
    if (app.got_subcommand("stopping-bound")) return cmd_stopping(opt, out);
    if (app.got_subcommand("check")) return cmd_check(opt, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const lp::SolverError& e) {
    err << "solver error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace treedual::cli
