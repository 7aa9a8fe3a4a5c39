#pragma once

// Dense reference computations used as independent oracles in tests. Nothing
// here calls the sparse kernels under test.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "pathgcn/graph.hpp"
#include "pathgcn/matrix.hpp"

namespace oracle {

using Eigen::MatrixXd;

inline MatrixXd to_eigen(const pathgcn::FeatureMatrix& m) {
  MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

inline pathgcn::FeatureMatrix from_eigen(const MatrixXd& m) {
  pathgcn::FeatureMatrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

/// Adjacency built from the raw edge list (not from the CSR arrays).
inline MatrixXd adjacency(const std::vector<pathgcn::Edge>& edges, int n) {
  MatrixXd a = MatrixXd::Zero(n, n);
  for (auto [u, v] : edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

inline Eigen::VectorXd degrees(const MatrixXd& a) {
  Eigen::VectorXd d(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) d(i) = (a.row(i).array() != 0.0).count();
  return d;
}

/// A D^-1 with an implicit self-loop on isolated nodes.
inline MatrixXd column_stochastic(const MatrixXd& a) {
  const auto d = degrees(a);
  MatrixXd m = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (d(j) == 0) m(j, j) = 1.0;
    else m.col(j) /= d(j);
  }
  return m;
}

/// D^-1 A, the one-step walk transition probabilities (row = current node).
inline MatrixXd walk_matrix(const MatrixXd& a) { return column_stochastic(a).transpose(); }

inline MatrixXd gcn_propagator(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  MatrixXd at = a + MatrixXd::Identity(n, n);
  const auto d = degrees(a);
  Eigen::VectorXd inv_sqrt(n);
  for (int i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(d(i) + 1.0);
  return inv_sqrt.asDiagonal() * at * inv_sqrt.asDiagonal();
}

/// sum_i s_i M^i
inline MatrixXd polynomial(const MatrixXd& m, const std::vector<double>& s) {
  MatrixXd power = MatrixXd::Identity(m.rows(), m.cols());
  MatrixXd out = MatrixXd::Zero(m.rows(), m.cols());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) power = m * power;
    out += s[i] * power;
  }
  return out;
}

inline std::vector<pathgcn::Edge> random_edges(int n, double prob, std::uint64_t seed, bool self_loops = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<pathgcn::Edge> edges;
  for (int a = 0; a < n; ++a)
    for (int b = self_loops ? a : a + 1; b < n; ++b)
      if (u(rng) < prob) edges.emplace_back(a, b);
  return edges;
}

inline pathgcn::FeatureMatrix random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  pathgcn::FeatureMatrix m(rows, cols);
  for (double& v : m.storage()) v = u(rng);
  return m;
}

}  // namespace oracle
