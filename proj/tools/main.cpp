// Command-line front end: scenario generation, distributed runs, the
// centralized benchmark, and parameter sweeps.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridmarket/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Consensus-based economic dispatch simulator over a pub/sub message bus"};
  app.require_subcommand(1);

  gridmarket::RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Run the distributed dispatch protocol");
  run->add_option("--scenario", run_opt.scenario_path, "Scenario file")->required();
  run->add_option("--trace-out", run_opt.trace_out, "Write per-iteration trace CSV");
  run->add_option("--summary-out", run_opt.summary_out, "Write machine-readable summary");
  run->add_option("--event-log", run_opt.event_log, "Write bus event log CSV");
  run->add_option("--max-iters", run_opt.overrides.max_iters, "Iteration budget");
  run->add_option("--epsilon", run_opt.overrides.epsilon, "Mismatch feedback gain");
  run->add_option("--tol-lambda", run_opt.overrides.tol_lambda, "Lambda spread tolerance");
  run->add_option("--tol-power", run_opt.overrides.tol_power, "Mismatch tolerance, kW");
  run->add_option("--drop-prob", run_opt.overrides.drop_prob, "Message drop probability");
  run->add_option("--delay-rounds", run_opt.overrides.delay_rounds, "Max message delay, rounds");
  run->add_option("--seed", run_opt.overrides.seed, "Delivery RNG seed");
  run->add_option("--topology", run_opt.overrides.topology,
                  "Override topology preset (ring, line, complete, star)");
  run->add_flag("--check", run_opt.check, "Compare converged lambda against the oracle");

  gridmarket::OracleOptions oracle_opt;
  auto* oracle = app.add_subcommand("oracle", "Solve centrally and verify KKT conditions");
  oracle->add_option("--scenario", oracle_opt.scenario_path, "Scenario file")->required();
  oracle->add_option("--summary-out", oracle_opt.summary_out, "Write machine-readable summary");

  gridmarket::GenerateOptions gen_opt;
  auto* gen = app.add_subcommand("generate", "Generate a random scenario file");
  gen->add_option("--seed", gen_opt.seed, "Generator seed")->required();
  gen->add_option("--gens", gen_opt.gens, "Number of generators");
  gen->add_option("--loads", gen_opt.loads, "Number of consumers");
  gen->add_option("--topology", gen_opt.topology, "Topology preset to embed");
  gen->add_option("--out", gen_opt.out_path, "Output path (stdout when omitted)");

  gridmarket::SweepOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "Run once per parameter value");
  sweep->add_option("--scenario", sweep_opt.scenario_path, "Scenario file")->required();
  sweep->add_option("--epsilon", sweep_opt.epsilons, "Feedback gains to sweep")
      ->delimiter(',');
  sweep->add_option("--drop-prob", sweep_opt.drop_probs, "Drop probabilities to sweep")
      ->delimiter(',');
  sweep->add_option("--out", sweep_opt.out_path, "Output CSV path (stdout when omitted)");
  sweep->add_option("--max-iters", sweep_opt.overrides.max_iters, "Iteration budget");
  sweep->add_option("--seed", sweep_opt.overrides.seed, "Delivery RNG seed");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return gridmarket::cmd_run(run_opt, std::cout, std::cerr);
  if (oracle->parsed()) return gridmarket::cmd_oracle(oracle_opt, std::cout, std::cerr);
  if (gen->parsed()) return gridmarket::cmd_generate(gen_opt, std::cout, std::cerr);
  if (sweep->parsed()) return gridmarket::cmd_sweep(sweep_opt, std::cout, std::cerr);
  return gridmarket::kExitError;
}
