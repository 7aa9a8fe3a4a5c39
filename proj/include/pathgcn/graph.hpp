#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pathgcn/matrix.hpp"

namespace pathgcn {

using NodeId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Immutable undirected graph in CSR form. Both directions of every edge are
/// stored; a self-loop occupies a single entry in its row and counts once
/// toward the degree.
class Graph {
 public:
  Graph() = default;

  /// Symmetric closure of `edges` with duplicates removed.
  static Graph from_edge_list(std::span<const Edge> edges, NodeId n) {
    if (n <= 0) throw std::invalid_argument("graph_from_edge_list: node count must be positive");
    std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(n));
    for (const auto& [u, v] : edges) {
      if (u < 0 || u >= n || v < 0 || v >= n) {
        throw std::out_of_range("graph_from_edge_list: edge (" + std::to_string(u) + "," +
                                std::to_string(v) + ") out of range for n=" + std::to_string(n));
      }
      adj[u].push_back(v);
      if (u != v) adj[v].push_back(u);
    }
    Graph g;
    g.n_ = n;
    g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (NodeId v = 0; v < n; ++v) {
      auto& row = adj[v];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      g.offsets_[v + 1] = g.offsets_[v] + static_cast<std::int64_t>(row.size());
    }
    g.neighbors_.reserve(static_cast<std::size_t>(g.offsets_.back()));
    g.degrees_.resize(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v) {
      g.neighbors_.insert(g.neighbors_.end(), adj[v].begin(), adj[v].end());
      g.degrees_[v] = static_cast<NodeId>(adj[v].size());
    }
    return g;
  }

  NodeId num_nodes() const noexcept { return n_; }
  std::size_t num_entries() const noexcept { return neighbors_.size(); }

  /// Number of undirected edges, self-loops included.
  std::size_t num_edges() const noexcept {
    std::size_t loops = 0;
    for (NodeId v = 0; v < n_; ++v) loops += has_edge(v, v) ? 1 : 0;
    return (neighbors_.size() + loops) / 2;
  }

  std::span<const NodeId> neighbors(NodeId v) const noexcept {
    return {neighbors_.data() + offsets_[v], static_cast<std::size_t>(offsets_[v + 1] - offsets_[v])};
  }
  NodeId degree(NodeId v) const noexcept { return degrees_[v]; }

  std::span<const std::int64_t> row_offsets() const noexcept { return offsets_; }
  std::span<const NodeId> neighbor_array() const noexcept { return neighbors_; }
  std::span<const NodeId> degrees() const noexcept { return degrees_; }

  bool has_edge(NodeId u, NodeId v) const noexcept {
    auto row = neighbors(u);
    return std::binary_search(row.begin(), row.end(), v);
  }

  /// Undirected edge list with u <= v, sorted.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    for (NodeId u = 0; u < n_; ++u)
      for (NodeId v : neighbors(u))
        if (u <= v) out.emplace_back(u, v);
    return out;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  NodeId n_ = 0;
  std::vector<std::int64_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  std::vector<NodeId> degrees_;
};

namespace detail {
inline void require_rows(const Graph& g, const FeatureMatrix& f, const char* where) {
  require_shape(f.rows() == static_cast<std::size_t>(g.num_nodes()), where,
                "features have " + std::to_string(f.rows()) + " rows, graph has " +
                    std::to_string(g.num_nodes()) + " nodes");
}
}  // namespace detail

/// (A D^-1) f: column-stochastic transition. out[j] = sum_{i in N(j)} f[i] / deg(i).
/// Isolated nodes keep their own mass (implicit self-loop).
inline FeatureMatrix transition_apply(const Graph& g, const FeatureMatrix& f) {
  detail::require_rows(g, f, "transition_apply");
  const std::size_t c = f.cols();
  FeatureMatrix out(f.rows(), c);
  for (NodeId j = 0; j < g.num_nodes(); ++j) {
    auto dst = out.row(j);
    if (g.degree(j) == 0) {
      std::copy_n(f.row(j).begin(), c, dst.begin());
      continue;
    }
    for (NodeId i : g.neighbors(j)) {
      const double w = 1.0 / g.degree(i);
      auto src = f.row(i);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += w * src[ch];
    }
  }
  return out;
}

/// (D^-1 A) f = (A D^-1)^T f: expected feature one uniform walk step away.
/// out[j] = mean of f over N(j); isolated nodes map to themselves.
inline FeatureMatrix walk_expectation_apply(const Graph& g, const FeatureMatrix& f) {
  detail::require_rows(g, f, "walk_expectation_apply");
  const std::size_t c = f.cols();
  FeatureMatrix out(f.rows(), c);
  for (NodeId j = 0; j < g.num_nodes(); ++j) {
    auto dst = out.row(j);
    if (g.degree(j) == 0) {
      std::copy_n(f.row(j).begin(), c, dst.begin());
      continue;
    }
    for (NodeId i : g.neighbors(j)) {
      auto src = f.row(i);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
    const double inv = 1.0 / g.degree(j);
    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] *= inv;
  }
  return out;
}

/// D~^-1/2 (A + I) D~^-1/2 f, the fixed GCN smoothing operator.
inline FeatureMatrix gcn_propagator_apply(const Graph& g, const FeatureMatrix& f) {
  detail::require_rows(g, f, "gcn_propagator_apply");
  const std::size_t c = f.cols();
  std::vector<double> inv_sqrt(static_cast<std::size_t>(g.num_nodes()));
  for (NodeId v = 0; v < g.num_nodes(); ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.degree(v) + 1.0);
  FeatureMatrix out(f.rows(), c);
  for (NodeId j = 0; j < g.num_nodes(); ++j) {
    auto dst = out.row(j);
    {
      const double w = inv_sqrt[j] * inv_sqrt[j];
      auto src = f.row(j);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += w * src[ch];
    }
    for (NodeId i : g.neighbors(j)) {
      const double w = inv_sqrt[j] * inv_sqrt[i];
      auto src = f.row(i);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += w * src[ch];
    }
  }
  return out;
}

/// Power-iteration estimate of the dominant |eigenvalue| of A D^-1.
///
/// Iterates on the similar symmetric matrix D^-1/2 A D^-1/2 (isolated nodes
/// carry a unit diagonal), where the norm ratio ||S x|| / ||x|| of the iterates
/// is nondecreasing and bounded by the spectral radius.
inline double spectral_radius_estimate(const Graph& g, int iterations) {
  const NodeId n = g.num_nodes();
  if (n == 0) return 0.0;
  if (iterations < 1) throw std::invalid_argument("spectral_radius_estimate: iterations must be >= 1");
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) inv_sqrt[v] = g.degree(v) ? 1.0 / std::sqrt(double(g.degree(v))) : 0.0;

  std::vector<double> x(static_cast<std::size_t>(n)), y(x.size());
  for (NodeId v = 0; v < n; ++v) x[v] = 1.0 + 0.5 * std::sin(1.0 + v);
  auto normalize = [](std::vector<double>& v) {
    double s = 0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    for (double& a : v) a /= s;
    return s;
  };
  normalize(x);
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (NodeId j = 0; j < n; ++j) {
      if (g.degree(j) == 0) {
        y[j] = x[j];
        continue;
      }
      double acc = 0;
      for (NodeId i : g.neighbors(j)) acc += inv_sqrt[i] * x[i];
      y[j] = inv_sqrt[j] * acc;
    }
    estimate = normalize(y);
    if (estimate == 0.0) return 0.0;
    std::swap(x, y);
  }
  return estimate;
}

}  // namespace pathgcn
