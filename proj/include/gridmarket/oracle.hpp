#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gridmarket/model.hpp"

namespace gridmarket {

struct DispatchSolution {
  Dispatch dispatch;
  double lambda_star = 0.0;  // equilibrium incremental cost, $/kWh
  double total_gen = 0.0;    // kW
  double total_load = 0.0;   // kW
  double objective = 0.0;    // $/h
  bool feasible = false;
  bool capacity_limited = false;  // every generator saturated at lambda_star
};

/// Total generation best-responding to lambda. Nondecreasing, piecewise linear.
inline double aggregate_generation(const Scenario& s, double lambda) {
  double total = 0.0;
  for (const auto& g : s.generators) total += gen_response(g, lambda);
  return total;
}

/// Total demand best-responding to lambda. Nonincreasing, piecewise linear.
inline double aggregate_load(const Scenario& s, double lambda) {
  double total = 0.0;
  for (const auto& c : s.consumers) total += load_response(c, lambda);
  return total;
}

namespace detail {

/// Excess supply at price lambda; the root is the market-clearing price.
inline double imbalance(const Scenario& s, double lambda) {
  return aggregate_generation(s, lambda) - aggregate_load(s, lambda);
}

}  // namespace detail

/// Centralized benchmark: bisection on lambda over the clamped response
/// curves. The problem is separable with one coupling constraint, so the dual
/// is one-dimensional and excess supply is nondecreasing in lambda. A flat
/// zero interval (no profitable trade, or simultaneous saturation) resolves
/// to its midpoint.
inline DispatchSolution solve_centralized(const Scenario& s, double balance_tol = 1e-6) {
  s.validate();
  double lambda_lo = 0.0;
  for (const auto& g : s.generators) lambda_lo = std::min(lambda_lo, g.beta);
  double omega_max = 0.0, mc_cap_max = 0.0;
  for (const auto& c : s.consumers) omega_max = std::max(omega_max, c.omega);
  for (const auto& g : s.generators)
    mc_cap_max = std::max(mc_cap_max, g.beta + 2.0 * g.alpha * g.p_max);
  const double lambda_hi = omega_max + mc_cap_max;
  const double span = lambda_hi - lambda_lo;

  DispatchSolution sol;
  if (detail::imbalance(s, lambda_lo) > balance_tol) {
    // Generation floor above any achievable load. Unreachable with zero
    // lower bounds, but reported rather than looped on.
    sol.lambda_star = lambda_lo;
    sol.feasible = false;
    return sol;
  }

  const double width_tol = 1e-12 * span;
  // Left edge of {f >= 0}.
  double lo = lambda_lo, hi = lambda_hi;
  while (hi - lo > width_tol) {
    const double mid = 0.5 * (lo + hi);
    if (detail::imbalance(s, mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double left = hi;
  // Right edge of {f <= 0}.
  lo = lambda_lo;
  hi = lambda_hi;
  while (hi - lo > width_tol) {
    const double mid = 0.5 * (lo + hi);
    if (detail::imbalance(s, mid) <= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double right = lo;

  const double lambda_star = 0.5 * (left + right);
  sol.lambda_star = lambda_star;
  sol.dispatch.gen_power.reserve(s.generators.size());
  sol.dispatch.load_power.reserve(s.consumers.size());
  bool all_capped = true;
  for (const auto& g : s.generators) {
    const double p = gen_response(g, lambda_star);
    sol.dispatch.gen_power.push_back(p);
    sol.total_gen += p;
    if (p < g.p_max) all_capped = false;
  }
  for (const auto& c : s.consumers) {
    const double p = load_response(c, lambda_star);
    sol.dispatch.load_power.push_back(p);
    sol.total_load += p;
  }
  sol.objective = social_cost(s, sol.dispatch);
  sol.feasible = std::abs(sol.total_gen - sol.total_load) <= balance_tol;
  sol.capacity_limited = all_capped && sol.total_gen > 0.0;
  return sol;
}

struct KktViolation {
  std::string node_id;
  std::string condition;
  double marginal = 0.0;  // marginal cost or utility at the solution point
  double lambda = 0.0;
};

struct KktReport {
  std::vector<KktViolation> violations;
  bool clean() const { return violations.empty(); }
};

/// Stationarity check per node: interior powers must price at lambda_star,
/// clamped powers must satisfy the one-sided multiplier conditions.
inline KktReport verify_kkt(const Scenario& s, const DispatchSolution& sol,
                            double tol = 1e-6) {
  KktReport report;
  const double lam = sol.lambda_star;
  for (std::size_t i = 0; i < s.generators.size(); ++i) {
    const auto& g = s.generators[i];
    const double p = sol.dispatch.gen_power[i];
    const double eps = 1e-9 * std::max(1.0, g.p_max);
    if (p < -eps || p > g.p_max + eps)
      throw std::domain_error("verify_kkt: generator power out of bounds");
    const double mc = marginal_cost(g, std::clamp(p, 0.0, g.p_max));
    if (p <= eps) {
      if (mc < lam - tol)
        report.violations.push_back({s.generator_ids[i], "at zero but marginal cost below lambda", mc, lam});
    } else if (p >= g.p_max - eps) {
      if (mc > lam + tol)
        report.violations.push_back({s.generator_ids[i], "at capacity but marginal cost above lambda", mc, lam});
    } else if (std::abs(mc - lam) > tol) {
      report.violations.push_back({s.generator_ids[i], "interior marginal cost differs from lambda", mc, lam});
    }
  }
  for (std::size_t j = 0; j < s.consumers.size(); ++j) {
    const auto& c = s.consumers[j];
    const double p = sol.dispatch.load_power[j];
    const double eps = 1e-9 * std::max(1.0, c.p_max);
    if (p < -eps || p > c.p_max + eps)
      throw std::domain_error("verify_kkt: load power out of bounds");
    const double mu = marginal_utility(c, std::clamp(p, 0.0, c.p_max));
    if (p <= eps) {
      if (mu > lam + tol)
        report.violations.push_back({s.consumer_ids[j], "at zero but marginal utility above lambda", mu, lam});
    } else if (p >= c.p_max - eps) {
      if (mu < lam - tol)
        report.violations.push_back({s.consumer_ids[j], "at cap but marginal utility below lambda", mu, lam});
    } else if (std::abs(mu - lam) > tol) {
      report.violations.push_back({s.consumer_ids[j], "interior marginal utility differs from lambda", mu, lam});
    }
  }
  return report;
}

}  // namespace gridmarket
