#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gridmarket/consensus.hpp"
#include "gridmarket/oracle.hpp"
#include "gridmarket/report.hpp"
#include "gridmarket/scenario.hpp"

namespace gridmarket {

// Exit codes shared by the CLI commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      // bad input, I/O failure, failed --check
inline constexpr int kExitMaxIters = 2;   // run ended without consensus
inline constexpr int kExitDiverged = 3;   // estimates blew past the divergence limit
inline constexpr int kExitInfeasible = 4; // oracle reported infeasibility

/// Command-line overrides layered on top of the scenario file's solver
/// section. Unset fields keep the file/default value.
struct RunOverrides {
  std::optional<double> epsilon;
  std::optional<long> max_iters;
  std::optional<double> tol_lambda;
  std::optional<double> tol_power;
  std::optional<double> drop_prob;
  std::optional<int> delay_rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> topology;

  void apply(SolverConfig& cfg) const {
    if (epsilon) cfg.epsilon = *epsilon;
    if (max_iters) cfg.max_iters = *max_iters;
    if (tol_lambda) cfg.tol_lambda = *tol_lambda;
    if (tol_power) cfg.tol_power = *tol_power;
    if (drop_prob) cfg.delivery.drop_probability = *drop_prob;
    if (delay_rounds) cfg.delivery.delay_rounds = *delay_rounds;
    if (seed) cfg.delivery.rng_seed = *seed;
  }
};

struct RunOptions {
  std::string scenario_path;
  std::string trace_out;
  std::string summary_out;
  std::string event_log;
  bool check = false;
  double check_tol = 1e-2;  // $/kWh
  RunOverrides overrides;
};

namespace detail {

inline bool write_file(const std::string& path, const std::string& content, std::ostream& err) {
  std::ofstream out(path);
  if (!out) {
    err << "error: cannot write " << path << "\n";
    return false;
  }
  out << content;
  return true;
}

inline std::optional<LoadedScenario> load_with_overrides(const std::string& path,
                                                         const RunOverrides& ov,
                                                         std::ostream& err) {
  try {
    ScenarioFile sf = load_scenario_file(path);
    if (ov.topology) sf.graph = TopologySpec{*ov.topology, {}};
    LoadedScenario ls{sf.scenario, build_topology(sf.graph, sf.scenario), sf.solver};
    ov.apply(ls.solver);
    ls.solver.validate();
    return ls;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return std::nullopt;
  }
}

}  // namespace detail

/// Distributed run: writes the summary table to `out`, optional trace CSV,
/// machine summary, and bus event log. Exit 0 on convergence, 2 when the
/// iteration budget runs out, 3 on divergence.
inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  auto loaded = detail::load_with_overrides(opt.scenario_path, opt.overrides, err);
  if (!loaded) return kExitError;
  loaded->solver.record_bus_events = !opt.event_log.empty();

  RunResult result;
  try {
    result = run_dispatch(loaded->scenario, loaded->graph, loaded->solver);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  if (!opt.trace_out.empty()) {
    std::ostringstream buf;
    write_trace_csv(buf, result.trace);
    if (!detail::write_file(opt.trace_out, buf.str(), err)) return kExitError;
  }
  if (!opt.event_log.empty()) {
    std::ostringstream buf;
    MessageBus::write_event_csv(buf, result.bus_events);
    if (!detail::write_file(opt.event_log, buf.str(), err)) return kExitError;
  }

  SummaryReport rep = make_summary(loaded->scenario, result.solution, result.iterations,
                                   result.converged);
  write_summary_text(out, rep);
  if (!opt.summary_out.empty()) {
    std::ostringstream buf;
    write_summary_json(buf, rep);
    if (!detail::write_file(opt.summary_out, buf.str(), err)) return kExitError;
  }

  if (!result.converged) {
    err << "not converged after " << result.iterations << " iterations\n";
    return kExitMaxIters;
  }
  if (opt.check) {
    const DispatchSolution oracle = solve_centralized(loaded->scenario);
    const double gap = std::abs(result.solution.lambda_star - oracle.lambda_star);
    out << "check: |lambda - oracle lambda*| = " << detail::fmt("%.3e", gap)
        << " (tolerance " << detail::fmt("%.3e", opt.check_tol) << ")\n";
    if (!(gap <= opt.check_tol)) {
      err << "check failed: distributed lambda " << detail::full(result.solution.lambda_star)
          << " vs oracle " << detail::full(oracle.lambda_star) << "\n";
      return kExitError;
    }
  }
  return kExitOk;
}

struct OracleOptions {
  std::string scenario_path;
  std::string summary_out;
  double kkt_tol = 1e-6;
};

/// Centralized benchmark solve plus KKT verification. Exit 4 on an
/// infeasibility report.
inline int cmd_oracle(const OracleOptions& opt, std::ostream& out, std::ostream& err) {
  LoadedScenario loaded;
  try {
    loaded = load_scenario(opt.scenario_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  const DispatchSolution sol = solve_centralized(loaded.scenario);
  if (!sol.feasible) {
    err << "infeasible: no balancing incremental cost exists for this scenario\n";
    return kExitInfeasible;
  }
  SummaryReport rep = make_summary(loaded.scenario, sol, -1, sol.feasible);
  rep.status_word = "Feasible";
  write_summary_text(out, rep);
  if (sol.capacity_limited)
    out << "warning: every generator is at capacity; demand is curtailed at lambda*\n";
  const KktReport kkt = verify_kkt(loaded.scenario, sol, opt.kkt_tol);
  write_kkt_report(out, kkt, sol.lambda_star);
  if (!opt.summary_out.empty()) {
    std::ostringstream buf;
    write_summary_json(buf, rep);
    if (!detail::write_file(opt.summary_out, buf.str(), err)) return kExitError;
  }
  return kkt.clean() ? kExitOk : kExitError;
}

struct GenerateOptions {
  std::uint64_t seed = 0;
  std::size_t gens = 6;
  std::size_t loads = 10;
  std::string topology = "ring";
  std::string out_path;
};

inline int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const ScenarioFile sf = generate_scenario(opt.seed, opt.gens, opt.loads, {}, opt.topology);
    // Reject bad topology names now rather than at run time.
    build_topology(sf.graph, sf.scenario);
    const std::string text = serialize_scenario(sf);
    if (opt.out_path.empty()) {
      out << text;
    } else if (!detail::write_file(opt.out_path, text, err)) {
      return kExitError;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

struct SweepOptions {
  std::string scenario_path;
  std::vector<double> epsilons;    // exactly one of these two lists
  std::vector<double> drop_probs;  // must be non-empty
  std::string out_path;
  RunOverrides overrides;
};

/// One run per sweep value; divergent runs are recorded, not fatal.
inline int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.epsilons.empty() == opt.drop_probs.empty()) {
    err << "error: sweep needs exactly one of --epsilon or --drop-prob value lists\n";
    return kExitError;
  }
  auto loaded = detail::load_with_overrides(opt.scenario_path, opt.overrides, err);
  if (!loaded) return kExitError;

  const bool eps_sweep = !opt.epsilons.empty();
  const auto& values = eps_sweep ? opt.epsilons : opt.drop_probs;
  std::vector<SweepRow> rows;
  for (double value : values) {
    SolverConfig cfg = loaded->solver;
    if (eps_sweep)
      cfg.epsilon = value;
    else
      cfg.delivery.drop_probability = value;
    SweepRow row{eps_sweep ? "epsilon" : "drop_probability", value, false, 0,
                 std::numeric_limits<double>::quiet_NaN()};
    try {
      cfg.validate();
      const RunResult result = run_dispatch(loaded->scenario, loaded->graph, cfg);
      double lo = result.trace.back().lambda, hi = lo;
      for (std::size_t i = result.trace.size() - loaded->graph.n; i < result.trace.size(); ++i) {
        lo = std::min(lo, result.trace[i].lambda);
        hi = std::max(hi, result.trace[i].lambda);
      }
      row.converged = result.converged;
      row.iterations = result.iterations;
      row.lambda_spread = hi - lo;
    } catch (const DivergenceError& e) {
      row.iterations = e.iteration();
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitError;
    }
    rows.push_back(row);
  }
  std::ostringstream buf;
  write_sweep_csv(buf, rows);
  if (opt.out_path.empty())
    out << buf.str();
  else if (!detail::write_file(opt.out_path, buf.str(), err))
    return kExitError;
  return kExitOk;
}

}  // namespace gridmarket
