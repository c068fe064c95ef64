#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridmarket/bus.hpp"
#include "gridmarket/graph.hpp"
#include "gridmarket/model.hpp"
#include "gridmarket/oracle.hpp"

namespace gridmarket {

enum class NodeKind { generator, consumer };

inline const char* to_string(NodeKind k) {
  return k == NodeKind::generator ? "generator" : "consumer";
}

/// One agent's local view: its estimate of the common incremental cost, its
/// power setpoint, and its tracked share of the system power mismatch
/// (demand minus generation).
struct AgentState {
  std::string id;
  NodeKind kind = NodeKind::generator;
  double lambda_est = 0.0;    // $/kWh
  double power = 0.0;         // kW
  double mismatch_est = 0.0;  // kW
};

struct SolverConfig {
  // Feedback gain from tracked mismatch onto the price estimate,
  // ($/kWh)/kW per iteration. The loop is stable only while
  // epsilon * max_i(response slope) stays below ~1; the steepest response
  // slope in the default scenario ranges is 1/(2*0.005) = 100 kW/($/kWh),
  // which caps the safe gain near 0.01. 0.005 leaves a 2x margin.
  double epsilon = 0.005;
  long max_iters = 5000;
  double tol_lambda = 1e-4;  // max spread of lambda estimates, $/kWh
  double tol_power = 1e-3;   // max |mismatch estimate|, kW
  DeliveryPolicy delivery{};
  bool record_bus_events = false;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("solver: epsilon must be > 0");
    if (!(tol_lambda > 0.0)) throw std::invalid_argument("solver: tol_lambda must be > 0");
    if (!(tol_power > 0.0)) throw std::invalid_argument("solver: tol_power must be > 0");
    if (max_iters < 0) throw std::invalid_argument("solver: max_iters must be >= 0");
    delivery.validate();
  }
};

/// Thrown when an estimate leaves the plausible range; usually the feedback
/// gain is too hot for the scenario's cost curvatures.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double epsilon, long iteration)
      : std::runtime_error("consensus diverged at iteration " + std::to_string(iteration) +
                           " (epsilon = " + std::to_string(epsilon) +
                           "; reduce the feedback gain)"),
        epsilon_(epsilon),
        iteration_(iteration) {}
  double epsilon() const { return epsilon_; }
  long iteration() const { return iteration_; }

 private:
  double epsilon_;
  long iteration_;
};

struct TraceRow {
  long iter = 0;
  std::string node_id;
  NodeKind kind = NodeKind::generator;
  double lambda = 0.0;
  double power = 0.0;
  double mismatch = 0.0;
  double potential = 0.0;  // Laplacian potential of the lambda vector at this iterate
};

struct RunResult {
  bool converged = false;
  long iterations = 0;
  DispatchSolution solution;
  std::vector<TraceRow> trace;       // one row per node per iterate, node order within an iterate
  std::vector<BusEvent> bus_events;  // populated when record_bus_events is set
};

/// Weighted contribution one agent mixes in: its own prior state plus one
/// entry per neighbor.
struct NeighborValue {
  double weight = 0.0;
  double lambda_est = 0.0;
  double mismatch_est = 0.0;
};

inline std::vector<AgentState> init_states(const Scenario& s) {
  s.validate();
  std::vector<AgentState> states;
  states.reserve(s.node_count());
  for (std::size_t i = 0; i < s.generators.size(); ++i)
    states.push_back({s.generator_ids[i], NodeKind::generator, s.generators[i].beta, 0.0, 0.0});
  for (std::size_t j = 0; j < s.consumers.size(); ++j)
    states.push_back({s.consumer_ids[j], NodeKind::consumer, s.consumers[j].omega,
                      load_response(s.consumers[j], s.consumers[j].omega), 0.0});
  // Initial powers are zero (responses at the marginal intercepts), so every
  // local mismatch estimate starts at local demand minus local generation: 0.
  return states;
}

/// One consensus step for one agent:
///   lambda+ = sum_j w_ij lambda_j + epsilon * own mismatch
///   power+  = clamped best response to lambda+
///   mismatch+ = sum_j w_ij mismatch_j +/- (power+ - power)   (+ for consumers)
/// The mismatch recursion telescopes, so under doubly stochastic weights the
/// estimates always sum to total demand minus total generation.
inline AgentState local_update(const AgentState& self, std::span<const NeighborValue> values,
                               const std::variant<GeneratorParams, ConsumerParams>& params,
                               const SolverConfig& cfg) {
  double weight_sum = 0.0, lambda_mix = 0.0, mismatch_mix = 0.0;
  for (const auto& v : values) {
    if (!std::isfinite(v.weight) || !std::isfinite(v.lambda_est) || !std::isfinite(v.mismatch_est))
      throw std::invalid_argument("local_update: non-finite input");
    weight_sum += v.weight;
    lambda_mix += v.weight * v.lambda_est;
    mismatch_mix += v.weight * v.mismatch_est;
  }
  if (!std::isfinite(self.lambda_est) || !std::isfinite(self.power) ||
      !std::isfinite(self.mismatch_est))
    throw std::invalid_argument("local_update: non-finite state");
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw std::invalid_argument("local_update: weights must sum to 1");

  AgentState next = self;
  next.lambda_est = lambda_mix + cfg.epsilon * self.mismatch_est;
  if (self.kind == NodeKind::generator) {
    next.power = gen_response(std::get<GeneratorParams>(params), next.lambda_est);
    next.mismatch_est = mismatch_mix - (next.power - self.power);
  } else {
    next.power = load_response(std::get<ConsumerParams>(params), next.lambda_est);
    next.mismatch_est = mismatch_mix + (next.power - self.power);
  }
  return next;
}

/// Zero-mismatch consensus: every tracked mismatch within tol_power of zero
/// and all price estimates within tol_lambda of each other.
inline bool consensus_reached(std::span<const AgentState> states, const SolverConfig& cfg) {
  double lambda_min = states.front().lambda_est, lambda_max = lambda_min;
  for (const auto& st : states) {
    if (std::abs(st.mismatch_est) > cfg.tol_power) return false;
    lambda_min = std::min(lambda_min, st.lambda_est);
    lambda_max = std::max(lambda_max, st.lambda_est);
  }
  return lambda_max - lambda_min <= cfg.tol_lambda;
}

inline std::string node_topic(const std::string& id) { return "consensus/node/" + id; }
inline constexpr const char* kControlTopic = "consensus/control";

namespace detail {

constexpr double kDivergenceLimit = 1e9;

inline std::vector<TraceRow> snapshot(long iter, std::span<const AgentState> states,
                                      const CommGraph& g) {
  std::vector<double> lambdas;
  lambdas.reserve(states.size());
  for (const auto& st : states) lambdas.push_back(st.lambda_est);
  const double potential = laplacian_potential(g, lambdas);
  std::vector<TraceRow> rows;
  rows.reserve(states.size());
  for (const auto& st : states)
    rows.push_back({iter, st.id, st.kind, st.lambda_est, st.power, st.mismatch_est, potential});
  return rows;
}

}  // namespace detail

/// Runs the full distributed protocol over the message bus until the
/// zero-mismatch consensus condition fires or max_iters is reached.
///
/// Per heartbeat, every agent publishes (lambda, mismatch, mismatch_acc,
/// power) to consensus/node/<id>; the bus delivers one round; every agent
/// drains its inbox and fuses neighbor values with Metropolis weights.
/// Message loss is survivable: the price average reuses the last received
/// value per neighbor (falling back to the agent's own estimate before first
/// contact), and mismatch mass rides a cumulative counter, so a missed round
/// contributes zero and the backlog is absorbed at the next reception. Loss
/// therefore delays balance information instead of destroying it.
inline RunResult run_dispatch(const Scenario& s, const CommGraph& g, const SolverConfig& cfg) {
  s.validate();
  cfg.validate();
  const std::size_t n = s.node_count();
  if (g.n != n)
    throw std::invalid_argument("run_dispatch: graph size does not match scenario");
  if (!is_connected(g))
    throw std::invalid_argument("run_dispatch: communication graph must be connected");

  const Matrix weights = metropolis_weights(g);
  std::vector<AgentState> states = init_states(s);

  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < n; ++i) index_of[states[i].id] = i;

  MessageBus bus(cfg.delivery, cfg.record_bus_events);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : g.adjacency[i])
      bus.subscribe(states[i].id, Topic::parse(node_topic(states[j].id)));
    bus.subscribe(states[i].id, Topic::parse(kControlTopic));
  }

  // Receiver-side view of each neighbor, per agent: last accepted publish
  // round, held lambda, and the cumulative mismatch counter already absorbed.
  struct NeighborView {
    long round = -1;
    bool heard = false;
    double lambda = 0.0;
    double acc_taken = 0.0;
  };
  std::vector<std::vector<NeighborView>> view(n);
  for (std::size_t i = 0; i < n; ++i) view[i].resize(g.adjacency[i].size());

  // Cumulative mismatch through each agent's current state.
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) acc[i] = states[i].mismatch_est;

  RunResult result;
  result.trace = detail::snapshot(0, states, g);

  bus.publish(Message{Topic::parse(kControlTopic), {{"iteration", 0.0}}, "coordinator", 0});

  long iter = 0;
  bool converged = false;
  while (iter < cfg.max_iters && !converged) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) {
      bus.publish(Message{Topic::parse(node_topic(states[i].id)),
                          {{"lambda", states[i].lambda_est},
                           {"mismatch", states[i].mismatch_est},
                           {"mismatch_acc", acc[i]},
                           {"power", states[i].power}},
                          states[i].id,
                          0});
    }
    bus.deliver_round();

    // Mass contribution from each neighbor this round; zero when nothing
    // (new) arrived.
    std::vector<std::vector<double>> pending(n);
    for (std::size_t i = 0; i < n; ++i) pending[i].assign(g.adjacency[i].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (const Message& msg : bus.drain_inbox(states[i].id)) {
        if (msg.topic.segments.size() != 3 || msg.topic.segments[1] != "node")
          continue;  // control traffic
        const std::size_t j = index_of.at(msg.publisher);
        const auto adj_it =
            std::find(g.adjacency[i].begin(), g.adjacency[i].end(), j) - g.adjacency[i].begin();
        NeighborView& nv = view[i][static_cast<std::size_t>(adj_it)];
        if (msg.publish_round <= nv.round) continue;  // stale reordered arrival
        const double m_now = msg.payload.at("mismatch");
        const double acc_now = msg.payload.at("mismatch_acc");
        // Mass published before this message that we have not absorbed yet.
        const double backlog = (acc_now - m_now) - nv.acc_taken;
        pending[i][static_cast<std::size_t>(adj_it)] += m_now + backlog;
        nv.round = msg.publish_round;
        nv.heard = true;
        nv.lambda = msg.payload.at("lambda");
        nv.acc_taken = acc_now;
      }
    }

    std::vector<AgentState> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<NeighborValue> values;
      values.reserve(g.adjacency[i].size() + 1);
      values.push_back({weights(i, i), states[i].lambda_est, states[i].mismatch_est});
      for (std::size_t a = 0; a < g.adjacency[i].size(); ++a) {
        const std::size_t j = g.adjacency[i][a];
        const NeighborView& nv = view[i][a];
        values.push_back({weights(i, j), nv.heard ? nv.lambda : states[i].lambda_est,
                          pending[i][a]});
      }
      next[i] = local_update(states[i], values, s.node_params(i), cfg);
      acc[i] += next[i].mismatch_est;
    }
    states = std::move(next);

    for (const auto& st : states)
      if (std::abs(st.lambda_est) > detail::kDivergenceLimit ||
          std::abs(st.mismatch_est) > detail::kDivergenceLimit)
        throw DivergenceError(cfg.epsilon, iter);

    auto rows = detail::snapshot(iter, states, g);
    result.trace.insert(result.trace.end(), rows.begin(), rows.end());
    converged = consensus_reached(states, cfg);
  }

  bus.publish(Message{Topic::parse(kControlTopic),
                      {{"iteration", static_cast<double>(iter)}},
                      "coordinator",
                      0});
  bus.deliver_round();

  result.converged = converged;
  result.iterations = iter;
  DispatchSolution& sol = result.solution;
  double lambda_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lambda_sum += states[i].lambda_est;
    if (s.is_generator(i)) {
      sol.dispatch.gen_power.push_back(states[i].power);
      sol.total_gen += states[i].power;
    } else {
      sol.dispatch.load_power.push_back(states[i].power);
      sol.total_load += states[i].power;
    }
  }
  sol.lambda_star = lambda_sum / static_cast<double>(n);
  sol.objective = social_cost(s, sol.dispatch);
  sol.feasible = converged;
  if (cfg.record_bus_events) result.bus_events = bus.take_events();
  return result;
}

/// Laplacian potential of the lambda vector at each iterate of a trace.
/// Trace rows must be grouped per iterate in node order, as run_dispatch
/// emits them.
inline std::vector<double> trace_laplacian_potential(std::span<const TraceRow> trace,
                                                     const CommGraph& g) {
  if (trace.empty()) throw std::invalid_argument("trace_laplacian_potential: empty trace");
  if (g.n == 0 || trace.size() % g.n != 0)
    throw std::invalid_argument("trace_laplacian_potential: trace size not a multiple of n");
  std::vector<double> series;
  series.reserve(trace.size() / g.n);
  std::vector<double> lambdas(g.n);
  for (std::size_t row = 0; row < trace.size(); row += g.n) {
    for (std::size_t i = 0; i < g.n; ++i) lambdas[i] = trace[row + i].lambda;
    series.push_back(laplacian_potential(g, lambdas));
  }
  return series;
}

}  // namespace gridmarket
