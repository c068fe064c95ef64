#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridmarket/consensus.hpp"
#include "gridmarket/graph.hpp"
#include "gridmarket/model.hpp"
#include "gridmarket/rng.hpp"

namespace gridmarket {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Topology declaration from a scenario file: a preset name or an explicit
/// edge list over node ids (with optional weights).
struct TopologySpec {
  std::string preset;  // "ring", "complete", "star", "line"; empty when explicit
  struct EdgeSpec {
    std::string a, b;
    double weight = 1.0;
  };
  std::vector<EdgeSpec> edges;
};

struct ScenarioFile {
  int version = 1;
  Scenario scenario;
  TopologySpec graph;
  SolverConfig solver{};
  bool has_solver = false;  // whether the file carried a solver section
};

namespace detail {

using json = nlohmann::json;

inline void ensure_keys(const json& obj, const std::set<std::string>& allowed,
                        const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ScenarioError(where + ": unknown key \"" + key + "\"");
  }
}

inline double get_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ScenarioError(where + "." + key + ": missing");
  if (!obj[key].is_number()) throw ScenarioError(where + "." + key + ": must be a number");
  return obj[key].get<double>();
}

inline std::string get_string(const json& obj, const std::string& key,
                              const std::string& where) {
  if (!obj.contains(key)) throw ScenarioError(where + "." + key + ": missing");
  if (!obj[key].is_string()) throw ScenarioError(where + "." + key + ": must be a string");
  return obj[key].get<std::string>();
}

inline long get_integer(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ScenarioError(where + "." + key + ": missing");
  if (!obj[key].is_number_integer()) throw ScenarioError(where + "." + key + ": must be an integer");
  return obj[key].get<long>();
}

}  // namespace detail

inline ScenarioFile parse_scenario(const std::string& text) {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  if (!root.is_object()) throw ScenarioError("scenario: top level must be an object");
  detail::ensure_keys(root, {"version", "generators", "consumers", "graph", "solver"},
                      "scenario");

  ScenarioFile sf;
  if (root.contains("version")) {
    if (!root["version"].is_number_integer())
      throw ScenarioError("scenario.version: must be an integer");
    sf.version = root["version"].get<int>();
    if (sf.version != 1) throw ScenarioError("scenario.version: unsupported version");
  }

  if (!root.contains("generators") || !root["generators"].is_array())
    throw ScenarioError("scenario.generators: missing or not an array");
  if (!root.contains("consumers") || !root["consumers"].is_array())
    throw ScenarioError("scenario.consumers: missing or not an array");

  std::size_t idx = 0;
  for (const auto& item : root["generators"]) {
    const std::string where = "generators[" + std::to_string(idx) + "]";
    if (!item.is_object()) throw ScenarioError(where + ": must be an object");
    detail::ensure_keys(item, {"id", "alpha", "beta", "gamma", "p_max"}, where);
    sf.scenario.generator_ids.push_back(detail::get_string(item, "id", where));
    sf.scenario.generators.push_back({detail::get_number(item, "alpha", where),
                                      detail::get_number(item, "beta", where),
                                      detail::get_number(item, "gamma", where),
                                      detail::get_number(item, "p_max", where)});
    ++idx;
  }
  idx = 0;
  for (const auto& item : root["consumers"]) {
    const std::string where = "consumers[" + std::to_string(idx) + "]";
    if (!item.is_object()) throw ScenarioError(where + ": must be an object");
    detail::ensure_keys(item, {"id", "sigma", "omega", "p_max"}, where);
    sf.scenario.consumer_ids.push_back(detail::get_string(item, "id", where));
    sf.scenario.consumers.push_back({detail::get_number(item, "sigma", where),
                                     detail::get_number(item, "omega", where),
                                     detail::get_number(item, "p_max", where)});
    ++idx;
  }
  try {
    sf.scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }

  if (!root.contains("graph")) throw ScenarioError("scenario.graph: missing");
  const auto& graph = root["graph"];
  if (graph.is_string()) {
    sf.graph.preset = graph.get<std::string>();
  } else if (graph.is_object()) {
    detail::ensure_keys(graph, {"edges"}, "graph");
    if (!graph.contains("edges") || !graph["edges"].is_array())
      throw ScenarioError("graph.edges: missing or not an array");
    std::size_t e = 0;
    for (const auto& edge : graph["edges"]) {
      const std::string where = "graph.edges[" + std::to_string(e) + "]";
      if (!edge.is_array() || edge.size() < 2 || edge.size() > 3)
        throw ScenarioError(where + ": must be [id, id] or [id, id, weight]");
      if (!edge[0].is_string() || !edge[1].is_string())
        throw ScenarioError(where + ": endpoints must be node ids");
      TopologySpec::EdgeSpec es{edge[0].get<std::string>(), edge[1].get<std::string>(), 1.0};
      if (edge.size() == 3) {
        if (!edge[2].is_number()) throw ScenarioError(where + ": weight must be a number");
        es.weight = edge[2].get<double>();
      }
      sf.graph.edges.push_back(std::move(es));
      ++e;
    }
  } else {
    throw ScenarioError("scenario.graph: must be a preset name or an edge-list object");
  }

  if (root.contains("solver")) {
    const auto& solver = root["solver"];
    if (!solver.is_object()) throw ScenarioError("scenario.solver: must be an object");
    detail::ensure_keys(solver,
                        {"epsilon", "max_iters", "tol_lambda", "tol_power",
                         "drop_probability", "delay_rounds", "seed"},
                        "solver");
    sf.has_solver = true;
    if (solver.contains("epsilon")) sf.solver.epsilon = detail::get_number(solver, "epsilon", "solver");
    if (solver.contains("max_iters")) sf.solver.max_iters = detail::get_integer(solver, "max_iters", "solver");
    if (solver.contains("tol_lambda")) sf.solver.tol_lambda = detail::get_number(solver, "tol_lambda", "solver");
    if (solver.contains("tol_power")) sf.solver.tol_power = detail::get_number(solver, "tol_power", "solver");
    if (solver.contains("drop_probability"))
      sf.solver.delivery.drop_probability = detail::get_number(solver, "drop_probability", "solver");
    if (solver.contains("delay_rounds"))
      sf.solver.delivery.delay_rounds = static_cast<int>(detail::get_integer(solver, "delay_rounds", "solver"));
    if (solver.contains("seed")) {
      const long seed = detail::get_integer(solver, "seed", "solver");
      if (seed < 0) throw ScenarioError("solver.seed: must be >= 0");
      sf.solver.delivery.rng_seed = static_cast<std::uint64_t>(seed);
    }
    try {
      sf.solver.validate();
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(std::string("scenario: ") + e.what());
    }
  }
  return sf;
}

/// Realizes the file's topology over the scenario's node index space
/// (generators first, then consumers).
inline CommGraph build_topology(const TopologySpec& spec, const Scenario& s) {
  if (!spec.preset.empty()) {
    try {
      return preset_graph(spec.preset, s.node_count());
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(std::string("graph: ") + e.what());
    }
  }
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < s.node_count(); ++i) index_of[s.node_id(i)] = i;
  std::vector<WeightedEdge> edges;
  for (const auto& e : spec.edges) {
    const auto a = index_of.find(e.a);
    const auto b = index_of.find(e.b);
    if (a == index_of.end()) throw ScenarioError("graph: unknown node id \"" + e.a + "\"");
    if (b == index_of.end()) throw ScenarioError("graph: unknown node id \"" + e.b + "\"");
    edges.push_back({a->second, b->second, e.weight});
  }
  try {
    return build_graph(s.node_count(), std::span<const WeightedEdge>(edges));
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("graph: ") + e.what());
  }
}

struct LoadedScenario {
  Scenario scenario;
  CommGraph graph;
  SolverConfig solver;
};

inline ScenarioFile load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

/// Validated scenario + realized communication graph + solver config with
/// defaults applied for omitted fields.
inline LoadedScenario load_scenario(const std::filesystem::path& path) {
  ScenarioFile sf = load_scenario_file(path);
  return {sf.scenario, build_topology(sf.graph, sf.scenario), sf.solver};
}

/// Canonical serialization: stable key order, two-space indent, trailing
/// newline. Same file in, same bytes out.
inline std::string serialize_scenario(const ScenarioFile& sf) {
  nlohmann::ordered_json root;
  root["version"] = sf.version;
  root["generators"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < sf.scenario.generators.size(); ++i) {
    const auto& g = sf.scenario.generators[i];
    root["generators"].push_back({{"id", sf.scenario.generator_ids[i]},
                                  {"alpha", g.alpha},
                                  {"beta", g.beta},
                                  {"gamma", g.gamma},
                                  {"p_max", g.p_max}});
  }
  root["consumers"] = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < sf.scenario.consumers.size(); ++j) {
    const auto& c = sf.scenario.consumers[j];
    root["consumers"].push_back({{"id", sf.scenario.consumer_ids[j]},
                                 {"sigma", c.sigma},
                                 {"omega", c.omega},
                                 {"p_max", c.p_max}});
  }
  if (!sf.graph.preset.empty()) {
    root["graph"] = sf.graph.preset;
  } else {
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& e : sf.graph.edges) {
      if (e.weight == 1.0)
        edges.push_back({e.a, e.b});
      else
        edges.push_back({e.a, e.b, e.weight});
    }
    root["graph"] = {{"edges", edges}};
  }
  if (sf.has_solver) {
    root["solver"] = {{"epsilon", sf.solver.epsilon},
                      {"max_iters", sf.solver.max_iters},
                      {"tol_lambda", sf.solver.tol_lambda},
                      {"tol_power", sf.solver.tol_power},
                      {"drop_probability", sf.solver.delivery.drop_probability},
                      {"delay_rounds", sf.solver.delivery.delay_rounds},
                      {"seed", sf.solver.delivery.rng_seed}};
  }
  return root.dump(2) + "\n";
}

inline void write_scenario(const std::filesystem::path& path, const ScenarioFile& sf) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write scenario file: " + path.string());
  out << serialize_scenario(sf);
}

/// Parameter ranges for seeded scenario generation. Defaults are sized so a
/// handful of generators can serve a few hundred kW with the clearing price
/// interior for most nodes.
struct ScenarioRanges {
  std::pair<double, double> alpha{0.005, 0.05};
  std::pair<double, double> beta{2.0, 8.0};
  std::pair<double, double> gamma{0.0, 5.0};
  std::pair<double, double> gen_p_max{80.0, 200.0};
  std::pair<double, double> sigma{0.02, 0.1};
  std::pair<double, double> omega{6.0, 14.0};
  std::pair<double, double> load_p_max{30.0, 100.0};

  void validate() const {
    auto check = [](std::pair<double, double> r, double floor, const char* name) {
      if (!(r.first < r.second) || !(r.first >= floor))
        throw std::invalid_argument(std::string("ranges.") + name + ": invalid range");
    };
    check(alpha, 1e-12, "alpha");
    check(beta, 0.0, "beta");
    check(gamma, 0.0, "gamma");
    check(gen_p_max, 1e-12, "gen_p_max");
    check(sigma, 1e-12, "sigma");
    check(omega, 1e-12, "omega");
    check(load_p_max, 1e-12, "load_p_max");
  }
};

/// Deterministic scenario draw: same seed, same file bytes. Node ids are
/// DG1..DGn and L1..Lm.
inline ScenarioFile generate_scenario(std::uint64_t seed, std::size_t n_gen, std::size_t n_load,
                                      const ScenarioRanges& ranges = {},
                                      const std::string& topology = "ring") {
  if (n_gen < 1 || n_load < 1)
    throw std::invalid_argument("generate_scenario: need at least one generator and one consumer");
  ranges.validate();
  Rng rng(seed);
  ScenarioFile sf;
  for (std::size_t i = 0; i < n_gen; ++i) {
    GeneratorParams g;
    g.alpha = rng.uniform(ranges.alpha.first, ranges.alpha.second);
    g.beta = rng.uniform(ranges.beta.first, ranges.beta.second);
    g.gamma = rng.uniform(ranges.gamma.first, ranges.gamma.second);
    g.p_max = rng.uniform(ranges.gen_p_max.first, ranges.gen_p_max.second);
    sf.scenario.generators.push_back(g);
    sf.scenario.generator_ids.push_back("DG" + std::to_string(i + 1));
  }
  for (std::size_t j = 0; j < n_load; ++j) {
    ConsumerParams c;
    c.sigma = rng.uniform(ranges.sigma.first, ranges.sigma.second);
    c.omega = rng.uniform(ranges.omega.first, ranges.omega.second);
    c.p_max = rng.uniform(ranges.load_p_max.first, ranges.load_p_max.second);
    sf.scenario.consumers.push_back(c);
    sf.scenario.consumer_ids.push_back("L" + std::to_string(j + 1));
  }
  sf.graph.preset = topology;
  sf.scenario.validate();
  return sf;
}

}  // namespace gridmarket
