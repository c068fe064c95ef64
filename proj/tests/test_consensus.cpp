#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "gridmarket/consensus.hpp"
#include "gridmarket/oracle.hpp"
#include "gridmarket/report.hpp"
#include "helpers.hpp"

using namespace gridmarket;
using Catch::Approx;

namespace {

Scenario two_node() {
  Scenario s;
  s.generators = {{0.01, 5.0, 0.0, 200.0}};
  s.generator_ids = {"DG1"};
  s.consumers = {{0.05, 10.0, 150.0}};
  s.consumer_ids = {"L1"};
  return s;
}

// Reference implementation of one update step, kept separate from the
// library code path on purpose.
AgentState reference_step(const AgentState& self, const std::vector<NeighborValue>& values,
                          const GeneratorParams* g, const ConsumerParams* c, double epsilon) {
  double lam = 0.0, mis = 0.0;
  for (const auto& v : values) {
    lam += v.weight * v.lambda_est;
    mis += v.weight * v.mismatch_est;
  }
  AgentState out = self;
  out.lambda_est = lam + epsilon * self.mismatch_est;
  if (g) {
    out.power = std::clamp((out.lambda_est - g->beta) / (2.0 * g->alpha), 0.0, g->p_max);
    out.mismatch_est = mis - (out.power - self.power);
  } else {
    out.power = std::clamp((c->omega - out.lambda_est) / (2.0 * c->sigma), 0.0, c->p_max);
    out.mismatch_est = mis + (out.power - self.power);
  }
  return out;
}

// demand minus generation at one iterate of a trace, plus the mismatch sum.
struct IterateBalance {
  double mismatch_sum = 0.0;
  double load_minus_gen = 0.0;
  double power_scale = 0.0;
};

std::vector<IterateBalance> balances(const std::vector<TraceRow>& trace, std::size_t n) {
  std::vector<IterateBalance> out;
  for (std::size_t row = 0; row < trace.size(); row += n) {
    IterateBalance b;
    for (std::size_t i = 0; i < n; ++i) {
      const TraceRow& r = trace[row + i];
      b.mismatch_sum += r.mismatch;
      b.load_minus_gen += (r.kind == NodeKind::consumer ? r.power : -r.power);
      b.power_scale += std::abs(r.power);
    }
    out.push_back(b);
  }
  return out;
}

}  // namespace

TEST_CASE("initial states start at the marginal intercepts with zero power") {
  const Scenario s = two_node();
  const auto states = init_states(s);
  REQUIRE(states.size() == 2);
  CHECK(states[0].id == "DG1");
  CHECK(states[0].kind == NodeKind::generator);
  CHECK(states[0].lambda_est == 5.0);
  CHECK(states[0].power == 0.0);
  CHECK(states[0].mismatch_est == 0.0);
  CHECK(states[1].lambda_est == 10.0);
  CHECK(states[1].power == 0.0);
  CHECK(states[1].mismatch_est == 0.0);

  Rng rng(61);
  for (int t = 0; t < 10; ++t) {
    const Scenario r =
        testutil::random_scenario(rng, 1 + rng.uniform_int(4), 1 + rng.uniform_int(5));
    double mismatch_sum = 0.0;
    for (const auto& st : init_states(r)) mismatch_sum += st.mismatch_est;
    CHECK(mismatch_sum == 0.0);
  }
}

TEST_CASE("local_update holds at the consensus fixed point") {
  SolverConfig cfg;
  const GeneratorParams g{0.01, 5.0, 0.0, 200.0};
  const double lambda_hat = 5.8333333333333333;
  const double p_hat = gen_response(g, lambda_hat);
  const AgentState self{"DG1", NodeKind::generator, lambda_hat, p_hat, 0.0};
  const std::vector<NeighborValue> values{{0.5, lambda_hat, 0.0}, {0.5, lambda_hat, 0.0}};
  const AgentState next = local_update(self, values, g, cfg);
  CHECK(next.lambda_est == Approx(lambda_hat).margin(1e-12));
  CHECK(next.power == Approx(p_hat).margin(1e-12));
  CHECK(next.mismatch_est == Approx(0.0).margin(1e-12));
}

TEST_CASE("local_update averages lambda over an isolated pair") {
  SolverConfig cfg;
  const GeneratorParams g{0.01, 4.0, 0.0, 200.0};
  const AgentState self{"DG1", NodeKind::generator, 4.0, 0.0, 0.0};
  const std::vector<NeighborValue> values{{0.5, 4.0, 0.0}, {0.5, 6.0, 0.0}};
  CHECK(local_update(self, values, g, cfg).lambda_est == Approx(5.0));
}

TEST_CASE("excess demand raises lambda and generation") {
  SolverConfig cfg;
  const GeneratorParams g{0.01, 5.0, 0.0, 200.0};
  const AgentState self{"DG1", NodeKind::generator, 6.0, 50.0, 40.0};  // positive mismatch
  const std::vector<NeighborValue> values{{0.5, 6.0, 40.0}, {0.5, 6.0, 10.0}};
  const AgentState next = local_update(self, values, g, cfg);
  const double lambda_mix = 6.0;
  CHECK(next.lambda_est > lambda_mix);
  CHECK(next.power > self.power);
  // And it agrees with the independently scripted step.
  const AgentState ref = reference_step(self, values, &g, nullptr, cfg.epsilon);
  CHECK(next.lambda_est == Approx(ref.lambda_est).margin(1e-15));
  CHECK(next.power == Approx(ref.power).margin(1e-15));
  CHECK(next.mismatch_est == Approx(ref.mismatch_est).margin(1e-15));
}

TEST_CASE("local_update agrees with the scripted reference on random inputs") {
  SolverConfig cfg;
  Rng rng(67);
  for (int t = 0; t < 200; ++t) {
    const bool is_gen = rng.bernoulli(0.5);
    GeneratorParams g{rng.uniform(0.005, 0.05), rng.uniform(2.0, 8.0), 0.0, rng.uniform(80, 200)};
    ConsumerParams c{rng.uniform(0.02, 0.1), rng.uniform(6.0, 14.0), rng.uniform(30, 100)};
    AgentState self{"n", is_gen ? NodeKind::generator : NodeKind::consumer,
                    rng.uniform(0.0, 15.0), 0.0, rng.uniform(-50.0, 50.0)};
    self.power = is_gen ? gen_response(g, self.lambda_est) : load_response(c, self.lambda_est);
    const std::size_t k = 1 + rng.uniform_int(4);
    std::vector<NeighborValue> values(k + 1);
    double wsum = 0.0;
    for (auto& v : values) {
      v = {rng.uniform(0.05, 1.0), rng.uniform(0.0, 15.0), rng.uniform(-50.0, 50.0)};
      wsum += v.weight;
    }
    for (auto& v : values) v.weight /= wsum;
    values[0].lambda_est = self.lambda_est;
    values[0].mismatch_est = self.mismatch_est;

    const AgentState got =
        is_gen ? local_update(self, values, g, cfg) : local_update(self, values, c, cfg);
    const AgentState want =
        reference_step(self, values, is_gen ? &g : nullptr, is_gen ? nullptr : &c, cfg.epsilon);
    CHECK(got.lambda_est == Approx(want.lambda_est).margin(1e-12));
    CHECK(got.power == Approx(want.power).margin(1e-12));
    CHECK(got.mismatch_est == Approx(want.mismatch_est).margin(1e-12));
  }
}

TEST_CASE("local_update validates weights and finiteness") {
  SolverConfig cfg;
  const GeneratorParams g{0.01, 5.0, 0.0, 200.0};
  const AgentState self{"DG1", NodeKind::generator, 5.0, 0.0, 0.0};
  const std::vector<NeighborValue> bad_sum{{0.5, 5.0, 0.0}, {0.6, 5.0, 0.0}};
  CHECK_THROWS_AS(local_update(self, bad_sum, g, cfg), std::invalid_argument);
  const std::vector<NeighborValue> nan_in{
      {0.5, std::numeric_limits<double>::quiet_NaN(), 0.0}, {0.5, 5.0, 0.0}};
  CHECK_THROWS_AS(local_update(self, nan_in, g, cfg), std::invalid_argument);
}

TEST_CASE("consensus_reached needs both conditions") {
  SolverConfig cfg;  // tol_lambda 1e-4, tol_power 1e-3
  std::vector<AgentState> states{{"a", NodeKind::generator, 5.0, 0.0, 0.0},
                                 {"b", NodeKind::consumer, 5.0, 0.0, 0.0}};
  CHECK(consensus_reached(states, cfg));
  states[0].mismatch_est = 2.0 * cfg.tol_power;
  CHECK_FALSE(consensus_reached(states, cfg));
  states[0].mismatch_est = 0.0;
  states[0].lambda_est = 5.0 + 1.5 * cfg.tol_lambda;
  CHECK_FALSE(consensus_reached(states, cfg));
}

TEST_CASE("two-node dispatch converges to the closed-form clearing price") {
  const Scenario s = two_node();
  const CommGraph g = preset_graph("line", 2);
  SolverConfig cfg;
  const RunResult r = run_dispatch(s, g, cfg);
  REQUIRE(r.converged);
  // 0.02 g + 5 = 10 - 0.1 g  =>  lambda* = 35/6, g = d = 125/3.
  CHECK(r.solution.lambda_star == Approx(35.0 / 6.0).margin(1e-2));
  CHECK(std::abs(r.solution.total_gen - r.solution.total_load) <=
        2.0 * cfg.tol_power + 1e-12);
  CHECK(r.solution.dispatch.gen_power[0] == Approx(125.0 / 3.0).margin(0.5));
  CHECK(r.iterations <= cfg.max_iters);
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations + 1) * 2);
}

TEST_CASE("zero iteration budget returns only the initial state") {
  const Scenario s = two_node();
  SolverConfig cfg;
  cfg.max_iters = 0;
  const RunResult r = run_dispatch(s, preset_graph("line", 2), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.trace.size() == 2);  // one row per node, iteration 0
}

TEST_CASE("absurd feedback gain raises a divergence error naming epsilon") {
  const Scenario s = two_node();
  SolverConfig cfg;
  cfg.epsilon = 1e7;
  try {
    run_dispatch(s, preset_graph("line", 2), cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epsilon() == 1e7);
    CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
  }
}

TEST_CASE("mismatched or disconnected graphs are configuration errors") {
  const Scenario s = two_node();
  CHECK_THROWS_AS(run_dispatch(s, preset_graph("ring", 3), SolverConfig{}),
                  std::invalid_argument);
  const std::vector<std::pair<std::size_t, std::size_t>> none;
  const CommGraph disconnected =
      build_graph(2, std::span<const std::pair<std::size_t, std::size_t>>(none));
  CHECK_THROWS_AS(run_dispatch(s, disconnected, SolverConfig{}), std::invalid_argument);
}

TEST_CASE("mismatch estimates conserve demand minus generation every iteration") {
  Rng rng(71);
  for (int t = 0; t < 10; ++t) {
    const Scenario s =
        testutil::random_scenario(rng, 1 + rng.uniform_int(4), 1 + rng.uniform_int(5));
    const std::size_t n = s.node_count();
    const CommGraph g = testutil::random_connected_graph(rng, n);
    SolverConfig cfg;
    cfg.max_iters = 400;
    const RunResult r = run_dispatch(s, g, cfg);
    for (const auto& b : balances(r.trace, n)) {
      const double tol = 1e-6 * std::max(1.0, b.power_scale);
      CHECK(std::abs(b.mismatch_sum - b.load_minus_gen) <= tol);
    }
  }
}

TEST_CASE("every traced power respects its capacity bounds exactly") {
  Rng rng(73);
  const Scenario s = testutil::random_scenario(rng, 3, 5);
  SolverConfig cfg;
  cfg.max_iters = 300;
  cfg.delivery = DeliveryPolicy{0.3, 1, 5};
  const RunResult r = run_dispatch(s, preset_graph("ring", 8), cfg);
  for (const auto& row : r.trace) {
    CHECK(row.power >= 0.0);
    std::size_t idx = 0;
    bool found = false;
    for (std::size_t i = 0; i < s.node_count(); ++i)
      if (s.node_id(i) == row.node_id) {
        idx = i;
        found = true;
        break;
      }
    REQUIRE(found);
    const double cap = s.is_generator(idx) ? s.generators[idx].p_max
                                           : s.consumers[idx - s.generators.size()].p_max;
    CHECK(row.power <= cap);
  }
}

TEST_CASE("identical configuration gives bit-identical traces and event logs") {
  Rng rng(79);
  const Scenario s = testutil::random_scenario(rng, 2, 3);
  SolverConfig cfg;
  cfg.delivery = DeliveryPolicy{0.25, 2, 31};
  cfg.record_bus_events = true;
  cfg.max_iters = 200;
  auto render = [&](const RunResult& r) {
    std::ostringstream trace, events;
    write_trace_csv(trace, r.trace);
    MessageBus::write_event_csv(events, r.bus_events);
    return std::pair{trace.str(), events.str()};
  };
  const auto a = render(run_dispatch(s, preset_graph("ring", 5), cfg));
  const auto b = render(run_dispatch(s, preset_graph("ring", 5), cfg));
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("runs under message loss still clear the market") {
  Rng rng(83);
  const Scenario s = testutil::random_scenario(rng, 6, 10);
  const DispatchSolution oracle = solve_centralized(s);
  SolverConfig cfg;
  cfg.delivery = DeliveryPolicy{0.2, 0, 17};
  const RunResult r = run_dispatch(s, preset_graph("ring", 16), cfg);
  REQUIRE(r.converged);
  CHECK(std::abs(r.solution.lambda_star - oracle.lambda_star) <= 5e-2);
}

TEST_CASE("bounded message delay only slows convergence") {
  const Scenario s = two_node();
  SolverConfig cfg;
  cfg.delivery = DeliveryPolicy{0.0, 2, 11};
  const RunResult r = run_dispatch(s, preset_graph("line", 2), cfg);
  REQUIRE(r.converged);
  CHECK(r.solution.lambda_star == Approx(35.0 / 6.0).margin(1e-2));
}

TEST_CASE("trace potential matches an external recomputation") {
  Rng rng(89);
  const Scenario s = testutil::random_scenario(rng, 2, 3);
  const CommGraph g = preset_graph("ring", 5);
  SolverConfig cfg;
  cfg.max_iters = 150;
  const RunResult r = run_dispatch(s, g, cfg);
  const auto series = trace_laplacian_potential(r.trace, g);
  REQUIRE(series.size() == static_cast<std::size_t>(r.iterations) + 1);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<double> lambdas;
    for (std::size_t i = 0; i < g.n; ++i) lambdas.push_back(r.trace[k * g.n + i].lambda);
    CHECK(series[k] == Approx(laplacian_potential(g, lambdas)).margin(1e-12));
    CHECK(r.trace[k * g.n].potential == Approx(series[k]).margin(1e-12));
  }
  if (r.converged) {
    CHECK(series.back() < series.front());  // disagreement shrank overall
    CHECK(series.back() <=
          static_cast<double>(g.n) * cfg.tol_lambda * cfg.tol_lambda + 1e-15);
  }
  CHECK_THROWS_AS(trace_laplacian_potential(std::vector<TraceRow>{}, g),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      trace_laplacian_potential(std::vector<TraceRow>(3, r.trace.front()), g),
      std::invalid_argument);
}

TEST_CASE("agents exchange state over per-node topics plus a control channel") {
  const Scenario s = two_node();
  SolverConfig cfg;
  cfg.max_iters = 3;
  cfg.record_bus_events = true;
  const RunResult r = run_dispatch(s, preset_graph("line", 2), cfg);
  bool saw_node_topic = false, saw_control = false;
  for (const auto& e : r.bus_events) {
    if (e.topic == node_topic("DG1")) saw_node_topic = true;
    if (e.topic == kControlTopic) saw_control = true;
  }
  CHECK(saw_node_topic);
  CHECK(saw_control);
}
