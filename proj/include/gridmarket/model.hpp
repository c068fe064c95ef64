#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gridmarket {

/// Quadratic generator cost curve: cost(p) = alpha*p^2 + beta*p + gamma.
struct GeneratorParams {
  double alpha = 0.0;  // curvature, $/kWh^2
  double beta = 0.0;   // linear term, $/kWh
  double gamma = 0.0;  // fixed cost, $/h
  double p_max = 0.0;  // capacity, kW

  void validate(const std::string& where = "generator") const {
    if (!(alpha > 0.0)) throw std::invalid_argument(where + ".alpha: must be > 0");
    if (!std::isfinite(beta)) throw std::invalid_argument(where + ".beta: must be finite");
    if (!(gamma >= 0.0)) throw std::invalid_argument(where + ".gamma: must be >= 0");
    if (!(p_max > 0.0)) throw std::invalid_argument(where + ".p_max: must be > 0");
  }
};

/// Saturating quadratic consumer utility: rises as omega*p - sigma*p^2 and
/// plateaus at omega^2/(4*sigma) once demand passes the satiation point.
struct ConsumerParams {
  double sigma = 0.0;  // curvature, $/kWh^2
  double omega = 0.0;  // marginal utility at zero demand, $/kWh
  double p_max = 0.0;  // demand cap, kW

  double satiation() const { return omega / (2.0 * sigma); }

  void validate(const std::string& where = "consumer") const {
    if (!(sigma > 0.0)) throw std::invalid_argument(where + ".sigma: must be > 0");
    if (!(omega > 0.0)) throw std::invalid_argument(where + ".omega: must be > 0");
    if (!(p_max > 0.0)) throw std::invalid_argument(where + ".p_max: must be > 0");
  }
};

/// Node set for one dispatch problem. Node indices run over generators first,
/// then consumers; ids are stable strings used in topics and reports.
struct Scenario {
  std::vector<GeneratorParams> generators;
  std::vector<ConsumerParams> consumers;
  std::vector<std::string> generator_ids;
  std::vector<std::string> consumer_ids;

  std::size_t node_count() const { return generators.size() + consumers.size(); }
  bool is_generator(std::size_t node) const { return node < generators.size(); }

  const std::string& node_id(std::size_t node) const {
    return is_generator(node) ? generator_ids[node]
                              : consumer_ids[node - generators.size()];
  }

  std::variant<GeneratorParams, ConsumerParams> node_params(std::size_t node) const {
    if (is_generator(node)) return generators[node];
    return consumers[node - generators.size()];
  }

  void validate() const {
    if (generators.empty()) throw std::invalid_argument("scenario: needs at least one generator");
    if (consumers.empty()) throw std::invalid_argument("scenario: needs at least one consumer");
    if (generator_ids.size() != generators.size() || consumer_ids.size() != consumers.size())
      throw std::invalid_argument("scenario: id list size mismatch");
    for (std::size_t i = 0; i < generators.size(); ++i)
      generators[i].validate("generators[" + std::to_string(i) + "]");
    for (std::size_t j = 0; j < consumers.size(); ++j)
      consumers[j].validate("consumers[" + std::to_string(j) + "]");
    std::vector<std::string> ids = generator_ids;
    ids.insert(ids.end(), consumer_ids.begin(), consumer_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw std::invalid_argument("scenario: node ids must be unique");
  }
};

/// Power setpoints for every node, kW.
struct Dispatch {
  std::vector<double> gen_power;
  std::vector<double> load_power;
};

inline double utility(const ConsumerParams& c, double p) {
  if (p < 0.0) throw std::domain_error("utility: negative power");
  const double sat = c.satiation();
  if (p <= sat) return c.omega * p - c.sigma * p * p;
  return c.omega * c.omega / (4.0 * c.sigma);
}

inline double cost(const GeneratorParams& g, double p) {
  if (p < 0.0) throw std::domain_error("cost: negative power");
  return g.alpha * p * p + g.beta * p + g.gamma;
}

inline double marginal_cost(const GeneratorParams& g, double p) {
  if (p < 0.0) throw std::domain_error("marginal_cost: negative power");
  return 2.0 * g.alpha * p + g.beta;
}

/// Zero in the saturated region; the kink at the satiation point takes the
/// saturated value so the response below stays single-valued.
inline double marginal_utility(const ConsumerParams& c, double p) {
  if (p < 0.0) throw std::domain_error("marginal_utility: negative power");
  if (p >= c.satiation()) return 0.0;
  return c.omega - 2.0 * c.sigma * p;
}

/// Profit-maximizing generation at price lambda, clamped to [0, p_max].
inline double gen_response(const GeneratorParams& g, double lambda) {
  const double p = (lambda - g.beta) / (2.0 * g.alpha);
  return std::clamp(p, 0.0, g.p_max);
}

/// Surplus-maximizing demand at price lambda, clamped to [0, p_max].
inline double load_response(const ConsumerParams& c, double lambda) {
  const double p = (c.omega - lambda) / (2.0 * c.sigma);
  return std::clamp(p, 0.0, c.p_max);
}

/// Minimization objective: total cost minus total utility, $/h.
inline double social_cost(const Scenario& s, const Dispatch& d) {
  if (d.gen_power.size() != s.generators.size() || d.load_power.size() != s.consumers.size())
    throw std::domain_error("social_cost: dispatch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < s.generators.size(); ++i) {
    const double p = d.gen_power[i];
    if (p < 0.0 || p > s.generators[i].p_max)
      throw std::domain_error("social_cost: generator power out of bounds");
    total += cost(s.generators[i], p);
  }
  for (std::size_t j = 0; j < s.consumers.size(); ++j) {
    const double p = d.load_power[j];
    if (p < 0.0 || p > s.consumers[j].p_max)
      throw std::domain_error("social_cost: load power out of bounds");
    total -= utility(s.consumers[j], p);
  }
  return total;
}

}  // namespace gridmarket
