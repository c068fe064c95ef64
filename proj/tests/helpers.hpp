#pragma once

// Shared generators and reference implementations for the test suite. The
// reference pieces here are written independently of the library internals on
// purpose: they are the oracles the implementation is checked against.

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gridmarket/graph.hpp"
#include "gridmarket/model.hpp"
#include "gridmarket/rng.hpp"

namespace testutil {

using gridmarket::CommGraph;
using gridmarket::ConsumerParams;
using gridmarket::GeneratorParams;
using gridmarket::Rng;
using gridmarket::Scenario;

inline Scenario random_scenario(Rng& rng, std::size_t n_gen, std::size_t n_load) {
  Scenario s;
  for (std::size_t i = 0; i < n_gen; ++i) {
    s.generators.push_back({rng.uniform(0.005, 0.05), rng.uniform(2.0, 8.0),
                            rng.uniform(0.0, 5.0), rng.uniform(80.0, 200.0)});
    s.generator_ids.push_back("DG" + std::to_string(i + 1));
  }
  for (std::size_t j = 0; j < n_load; ++j) {
    s.consumers.push_back({rng.uniform(0.02, 0.1), rng.uniform(6.0, 14.0),
                           rng.uniform(30.0, 100.0)});
    s.consumer_ids.push_back("L" + std::to_string(j + 1));
  }
  return s;
}

/// Random connected graph: a random spanning tree plus a few extra edges.
inline CommGraph random_connected_graph(Rng& rng, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t v = 1; v < n; ++v)
    edges.push_back({rng.uniform_int(v - 1), v});
  const std::size_t extra = rng.uniform_int(n);
  for (std::size_t k = 0; k < extra; ++k) {
    const std::size_t u = rng.uniform_int(n - 1);
    const std::size_t v = rng.uniform_int(n - 1);
    if (u != v) edges.push_back({std::min(u, v), std::max(u, v)});
  }
  return gridmarket::build_graph(
      n, std::span<const std::pair<std::size_t, std::size_t>>(edges));
}

/// Brute-force disagreement energy: 1/2 sum_{i,j} a_ij (x_j - x_i)^2 over the
/// full double loop, using the adjacency directly.
inline double potential_by_double_sum(const CommGraph& g, const std::vector<double>& x) {
  std::vector<std::vector<double>> a(g.n, std::vector<double>(g.n, 0.0));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    a[g.edges[e].first][g.edges[e].second] = g.edge_weights[e];
    a[g.edges[e].second][g.edges[e].first] = g.edge_weights[e];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) total += a[i][j] * (x[j] - x[i]) * (x[j] - x[i]);
  return 0.5 * total;
}

/// A scratch directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("gridmarket_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

 private:
  std::filesystem::path dir_;
};

}  // namespace testutil
