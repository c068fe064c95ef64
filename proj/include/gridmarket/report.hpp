#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmarket/consensus.hpp"
#include "gridmarket/model.hpp"
#include "gridmarket/oracle.hpp"

namespace gridmarket {

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

/// Full-precision round-trippable double for machine outputs.
inline std::string full(double v) { return fmt("%.17g", v); }

}  // namespace detail

/// Flat result table: per-node outputs plus totals, in the experiment-table
/// layout (loads first, then generators).
struct SummaryReport {
  struct Row {
    std::string id;
    NodeKind kind = NodeKind::generator;
    double power = 0.0;  // kW
  };
  std::vector<Row> rows;
  double total_gen = 0.0;
  double total_load = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  long iterations = -1;  // -1 when not applicable (centralized solve)
  bool converged = false;
  std::string status_word = "Converged";
};

inline SummaryReport make_summary(const Scenario& s, const DispatchSolution& sol,
                                  long iterations, bool converged) {
  SummaryReport rep;
  for (std::size_t j = 0; j < s.consumers.size(); ++j)
    rep.rows.push_back({s.consumer_ids[j], NodeKind::consumer, sol.dispatch.load_power[j]});
  for (std::size_t i = 0; i < s.generators.size(); ++i)
    rep.rows.push_back({s.generator_ids[i], NodeKind::generator, sol.dispatch.gen_power[i]});
  rep.total_gen = sol.total_gen;
  rep.total_load = sol.total_load;
  rep.lambda = sol.lambda_star;
  rep.objective = sol.objective;
  rep.iterations = iterations;
  rep.converged = converged;
  return rep;
}

/// Text table with display rounding: powers to 0.1 kW, lambda to 0.01 $/kWh.
/// Totals are computed before rounding.
inline void write_summary_text(std::ostream& os, const SummaryReport& rep) {
  os << "Node                    Output (kW)\n";
  for (const auto& row : rep.rows) {
    std::string line = row.id;
    line.resize(24, ' ');
    os << line << detail::fmt("%11.1f", row.power) << '\n';
  }
  os << "Total Generation (kW) " << detail::fmt("%.1f", rep.total_gen)
     << " | Total Load (kW) " << detail::fmt("%.1f", rep.total_load) << " | Lambda "
     << detail::fmt("%.2f", rep.lambda) << " | Iterations ";
  if (rep.iterations >= 0)
    os << rep.iterations;
  else
    os << '-';
  os << '\n';
  os << rep.status_word << ": " << (rep.converged ? "yes" : "no")
     << " | Objective ($/h): " << detail::fmt("%.2f", rep.objective) << '\n';
}

/// Machine-readable summary, full precision.
inline void write_summary_json(std::ostream& os, const SummaryReport& rep) {
  nlohmann::ordered_json j;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["lambda"] = rep.lambda;
  j["total_generation_kw"] = rep.total_gen;
  j["total_load_kw"] = rep.total_load;
  j["objective_per_h"] = rep.objective;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& row : rep.rows)
    j["nodes"].push_back(
        {{"id", row.id}, {"kind", to_string(row.kind)}, {"power_kw", row.power}});
  os << j.dump(2) << '\n';
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> trace) {
  os << "iter,node_id,kind,lambda,power,mismatch,potential\n";
  for (const auto& r : trace)
    os << r.iter << ',' << r.node_id << ',' << to_string(r.kind) << ','
       << detail::full(r.lambda) << ',' << detail::full(r.power) << ','
       << detail::full(r.mismatch) << ',' << detail::full(r.potential) << '\n';
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  bool converged = false;
  long iterations = 0;
  double lambda_spread = 0.0;  // NaN when the run diverged
};

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "param,value,converged,iterations,lambda_spread\n";
  for (const auto& r : rows)
    os << r.param << ',' << detail::full(r.value) << ',' << (r.converged ? 1 : 0) << ','
       << r.iterations << ',' << detail::full(r.lambda_spread) << '\n';
}

inline void write_kkt_report(std::ostream& os, const KktReport& report, double lambda_star) {
  if (report.clean()) {
    os << "KKT report (lambda* = " << detail::fmt("%.6g", lambda_star) << "): clean\n";
    return;
  }
  os << "KKT report (lambda* = " << detail::fmt("%.6g", lambda_star) << "): "
     << report.violations.size() << " violation(s)\n";
  for (const auto& v : report.violations)
    os << "  " << v.node_id << ": " << v.condition << " (marginal "
       << detail::fmt("%.6g", v.marginal) << ", lambda " << detail::fmt("%.6g", v.lambda)
       << ")\n";
}

}  // namespace gridmarket
