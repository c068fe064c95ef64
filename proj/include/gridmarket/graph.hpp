#pragma once

#include <cstddef>
#include <map>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridmarket {

/// Undirected communication topology. Edges are stored normalized
/// (u < v, sorted, deduplicated); an optional nonnegative weight per edge
/// feeds the Laplacian, while consensus weight construction ignores it.
struct CommGraph {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> edge_weights;               // parallel to edges
  std::vector<std::vector<std::size_t>> adjacency; // neighbor lists, sorted

  std::size_t degree(std::size_t i) const { return adjacency[i].size(); }
};

struct WeightedEdge {
  std::size_t u = 0, v = 0;
  double weight = 1.0;
};

inline CommGraph build_graph(std::size_t n, std::span<const WeightedEdge> edges) {
  std::map<std::pair<std::size_t, std::size_t>, double> canon;
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n)
      throw std::invalid_argument("graph: edge index out of range");
    if (e.u == e.v) throw std::invalid_argument("graph: self-loop not allowed");
    if (!(e.weight >= 0.0)) throw std::invalid_argument("graph: edge weight must be >= 0");
    canon[{std::min(e.u, e.v), std::max(e.u, e.v)}] = e.weight;
  }
  CommGraph g;
  g.n = n;
  g.adjacency.resize(n);
  for (const auto& [uv, w] : canon) {
    g.edges.push_back(uv);
    g.edge_weights.push_back(w);
    g.adjacency[uv.first].push_back(uv.second);
    g.adjacency[uv.second].push_back(uv.first);
  }
  return g;
}

inline CommGraph build_graph(std::size_t n,
                             std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<WeightedEdge> we;
  we.reserve(edges.size());
  for (const auto& [u, v] : edges) we.push_back({u, v, 1.0});
  return build_graph(n, std::span<const WeightedEdge>(we));
}

inline bool is_connected(const CommGraph& g) {
  if (g.n == 0) return true;
  std::vector<bool> seen(g.n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : g.adjacency[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        frontier.push(v);
      }
    }
  }
  return count == g.n;
}

/// Dense square matrix, row-major. Small n only; this project tops out at
/// tens of nodes.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit Matrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
    return y;
  }
};

/// Metropolis-Hastings consensus weights: w_ij = 1/(1 + max(deg_i, deg_j))
/// on edges, complement on the diagonal. Doubly stochastic on any connected
/// graph using only neighbor degrees. Edge weights are ignored here.
inline Matrix metropolis_weights(const CommGraph& g) {
  if (!is_connected(g))
    throw std::invalid_argument("metropolis_weights: graph must be connected");
  Matrix w(g.n);
  for (const auto& [u, v] : g.edges) {
    const double wij = 1.0 / (1.0 + static_cast<double>(std::max(g.degree(u), g.degree(v))));
    w.at(u, v) = wij;
    w.at(v, u) = wij;
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < g.n; ++j)
      if (j != i) off += w(i, j);
    w.at(i, i) = 1.0 - off;
  }
  return w;
}

/// L = D - A, with weighted adjacency when edge weights are set.
inline Matrix laplacian(const CommGraph& g) {
  Matrix l(g.n);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    const double w = g.edge_weights[e];
    l.at(u, v) -= w;
    l.at(v, u) -= w;
    l.at(u, u) += w;
    l.at(v, v) += w;
  }
  return l;
}

/// Disagreement energy x'Lx = 1/2 * sum_ij a_ij (x_j - x_i)^2. Zero exactly
/// when x is constant on every connected component.
inline double laplacian_potential(const CommGraph& g, std::span<const double> x) {
  if (x.size() != g.n)
    throw std::invalid_argument("laplacian_potential: vector length mismatch");
  double total = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    const double d = x[u] - x[v];
    total += g.edge_weights[e] * d * d;
  }
  return total;
}

/// Named topologies accepted in scenario files: ring, line, complete, star.
inline CommGraph preset_graph(const std::string& name, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (name == "ring") {
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    if (n > 2) edges.push_back({n - 1, 0});
  } else if (name == "line") {
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  } else if (name == "complete") {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j});
  } else if (name == "star") {
    for (std::size_t i = 1; i < n; ++i) edges.push_back({0, i});
  } else {
    throw std::invalid_argument("unknown topology preset: " + name);
  }
  return build_graph(n, std::span<const std::pair<std::size_t, std::size_t>>(edges));
}

}  // namespace gridmarket
