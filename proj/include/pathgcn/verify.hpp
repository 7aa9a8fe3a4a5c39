#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pathgcn/graph.hpp"
#include "pathgcn/nn.hpp"
#include "pathgcn/path_conv.hpp"
#include "pathgcn/path_sampler.hpp"
#include "pathgcn/random.hpp"

// Self-checks behind the `verify` command: Monte-Carlo convergence of the
// sampled convolution, exhaustive-walk equivalence, adjoint identities and
// finite-difference gradient checks.

namespace pathgcn::verify {

inline std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                                   double hi = 1.0) {
  FeatureMatrix m(rows, cols);
  SplitMix64 rng(seed);
  for (double& v : m.storage()) v = rng.uniform(lo, hi);
  return m;
}

/// Random kernel with sum |s_i| == 1.
inline std::vector<double> random_kernel(int k, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> s(static_cast<std::size_t>(k));
  double norm = 0;
  for (double& v : s) {
    v = rng.uniform(-1.0, 1.0);
    norm += std::abs(v);
  }
  for (double& v : s) v /= norm;
  return s;
}

/// E[sum_i s_i f[j_i]] computed by walking every path from every origin and
/// weighting it by its probability. Exponential in k; small graphs only.
inline FeatureMatrix enumerate_walk_expectation(const Graph& g, const FeatureMatrix& f, std::span<const double> s) {
  const std::size_t c = f.cols();
  const int k = static_cast<int>(s.size());
  FeatureMatrix out(f.rows(), c);
  std::function<void(NodeId, NodeId, int, double, std::vector<double>&)> walk =
      [&](NodeId origin, NodeId cur, int step, double prob, std::vector<double>& acc) {
        auto fc = f.row(cur);
        for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += s[step] * fc[ch];
        if (step + 1 == k) {
          auto dst = out.row(origin);
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += prob * acc[ch];
        } else {
          auto nbrs = g.neighbors(cur);
          if (nbrs.empty()) {
            walk(origin, cur, step + 1, prob, acc);
          } else {
            for (NodeId nxt : nbrs) walk(origin, nxt, step + 1, prob / static_cast<double>(nbrs.size()), acc);
          }
        }
        for (std::size_t ch = 0; ch < c; ++ch) acc[ch] -= s[step] * fc[ch];
      };
  std::vector<double> acc(c);
  for (NodeId j = 0; j < g.num_nodes(); ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    walk(j, j, 0, 1.0, acc);
  }
  return out;
}

struct ConvergenceResult {
  std::vector<std::pair<int, double>> errors;
  double slope = 0.0;
  double intercept = 0.0;
  double predicted_last = 0.0;
};

inline ConvergenceResult monte_carlo_convergence(const Graph& g, int k, std::uint64_t seed) {
  const FeatureMatrix f = random_matrix(static_cast<std::size_t>(g.num_nodes()), 4, mix_seed(seed, 11));
  const std::vector<double> s = random_kernel(k, mix_seed(seed, 12));
  const std::vector<int> ps = {10, 100, 1000, 10000};
  ConvergenceResult r;
  r.errors = monte_carlo_error(g, f, KernelSlice{s, k}, ps, mix_seed(seed, 13));
  std::tie(r.slope, r.intercept) = loglog_fit(r.errors);
  r.predicted_last = std::exp(r.intercept + r.slope * std::log(10000.0));
  return r;
}

inline CheckResult check_convergence(const Graph& g, std::uint64_t seed) {
  const auto r = monte_carlo_convergence(g, 5, seed);
  const bool ok = r.slope >= -0.65 && r.slope <= -0.35 && r.errors.back().second < 10.0 * r.predicted_last;
  return {"monte_carlo_convergence", ok, "slope=" + std::to_string(r.slope)};
}

inline double relative_error(const FeatureMatrix& a, const FeatureMatrix& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.storage()[i] - b.storage()[i];
    num += d * d;
    den = std::max(den, std::max(std::abs(a.storage()[i]), std::abs(b.storage()[i])));
  }
  return std::sqrt(num / std::max<std::size_t>(a.size(), 1)) / std::max(den, 1e-300);
}

inline bool is_connected(NodeId n, const std::vector<Edge>& edges) {
  std::vector<NodeId> parent(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) parent[v] = v;
  std::function<NodeId(NodeId)> find = [&](NodeId v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  NodeId components = n;
  for (auto [u, v] : edges) {
    const NodeId a = find(u), b = find(v);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

struct EquivalenceSummary {
  int graphs = 0;
  int cases = 0;
  double max_abs_diff = 0.0;
};

/// Every connected labeled simple graph on 1..max_nodes nodes, every k in
/// 1..max_k: walk enumeration against expected_conv.
inline EquivalenceSummary exhaustive_equivalence(int max_nodes, int max_k, std::uint64_t seed) {
  EquivalenceSummary sum;
  SplitMix64 rng(seed);
  for (NodeId n = 1; n <= max_nodes; ++n) {
    std::vector<Edge> pairs;
    for (NodeId u = 0; u < n; ++u)
      for (NodeId v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs.size()); ++mask) {
      std::vector<Edge> edges;
      for (std::size_t b = 0; b < pairs.size(); ++b)
        if (mask >> b & 1) edges.push_back(pairs[b]);
      if (!is_connected(n, edges)) continue;
      ++sum.graphs;
      const Graph g = Graph::from_edge_list(edges, n);
      const FeatureMatrix f = random_matrix(static_cast<std::size_t>(n), 2, rng.next());
      for (int k = 1; k <= max_k; ++k) {
        const auto s = random_kernel(k, rng.next());
        const FeatureMatrix a = enumerate_walk_expectation(g, f, s);
        const FeatureMatrix b = expected_conv(g, f, KernelSlice{s, k});
        for (std::size_t i = 0; i < a.size(); ++i)
          sum.max_abs_diff = std::max(sum.max_abs_diff, std::abs(a.storage()[i] - b.storage()[i]));
        ++sum.cases;
      }
    }
  }
  return sum;
}

inline CheckResult check_exhaustive_equivalence(std::uint64_t seed) {
  const auto r = exhaustive_equivalence(5, 3, seed);
  return {"exhaustive_walk_equivalence", r.max_abs_diff <= 1e-12,
          std::to_string(r.graphs) + " graphs, max_abs_diff=" + format_sci(r.max_abs_diff)};
}

/// For the bilinear path convolution F(f, s), each partial pairing recovers
/// the value: <g, F> == <grad_f, f> == <grad_s, s>.
inline CheckResult check_adjoint(const Graph& g, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes());
  const int k = 4;
  const std::size_t c = 3;
  const PathSet paths = sample_paths(g, {k, 3, mix_seed(seed, 1)});
  const FeatureMatrix f = random_matrix(n, c, mix_seed(seed, 2));
  const FeatureMatrix go = random_matrix(n, c, mix_seed(seed, 3));
  double worst = 0;
  for (bool depthwise : {false, true}) {
    std::vector<double> s(depthwise ? c * k : k);
    SplitMix64 rng(mix_seed(seed, depthwise ? 5 : 4));
    for (double& v : s) v = rng.uniform(-1, 1);
    const KernelSlice slice{s, k};
    auto check = [&](const FeatureMatrix& out, const PathConvGrads& gr) {
      const double lhs = dot(go, out);
      double rhs_s = 0;
      for (std::size_t i = 0; i < s.size(); ++i) rhs_s += gr.grad_kernel[i] * s[i];
      const double scale = std::max(1.0, std::abs(lhs));
      worst = std::max(worst, std::abs(lhs - dot(gr.grad_features, f)) / scale);
      worst = std::max(worst, std::abs(lhs - rhs_s) / scale);
    };
    check(path_conv_forward(paths, f, slice), path_conv_backward(paths, f, slice, go));
    const auto powers = walk_powers(g, f, k);
    check(combine_powers(powers, slice), expected_conv_backward(g, powers, slice, go));
  }
  return {"adjoint_consistency", worst <= 1e-10, "max_rel_gap=" + format_sci(worst)};
}

/// Central finite differences of a scalar function of a parameter vector.
inline std::vector<double> numeric_gradient(std::vector<double> x, const std::function<double(std::span<const double>)>& fn,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = fn(x);
    x[i] = orig - h;
    const double down = fn(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double vector_relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0, den_a = 0, den_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den_a += a[i] * a[i];
    den_b += b[i] * b[i];
  }
  const double den = std::max(std::sqrt(std::max(den_a, den_b)), 1e-300);
  return std::sqrt(num) / den;
}

/// Finite-difference checks of the layer gradients. Random instances; ReLU
/// inputs are kept away from the kink.
inline CheckResult check_layer_gradients(std::uint64_t seed, int instances = 20) {
  double worst = 0;
  for (int t = 0; t < instances; ++t) {
    SplitMix64 rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    const std::size_t rows = 2 + rng.below(5), in = 1 + rng.below(4), out = 1 + rng.below(4);
    const FeatureMatrix f = random_matrix(rows, in, rng.next());
    DenseParam w = DenseParam::glorot(in, out, ParamGroup::Gcn, rng.next());
    for (double& b : w.bias()) b = rng.uniform(-0.5, 0.5);
    const FeatureMatrix go = random_matrix(rows, out, rng.next());
    const auto grads = pointwise_conv_backward(f, w, go);

    auto loss_w = [&](std::span<const double> wv) {
      DenseParam p = w;
      std::copy(wv.begin(), wv.end(), p.weights().storage().begin());
      return dot(go, pointwise_conv_forward(f, p));
    };
    worst = std::max(worst, vector_relative_error(grads.grad_weights.storage(),
                                                  numeric_gradient(w.weights().storage(), loss_w)));
    auto loss_b = [&](std::span<const double> bv) {
      DenseParam p = w;
      std::copy(bv.begin(), bv.end(), p.bias().begin());
      return dot(go, pointwise_conv_forward(f, p));
    };
    worst = std::max(worst, vector_relative_error(grads.grad_bias, numeric_gradient(w.bias(), loss_b)));
    auto loss_f = [&](std::span<const double> fv) {
      FeatureMatrix x(rows, in, std::vector<double>(fv.begin(), fv.end()));
      return dot(go, pointwise_conv_forward(x, w));
    };
    worst = std::max(worst, vector_relative_error(grads.grad_input.storage(), numeric_gradient(f.storage(), loss_f)));

    // ReLU away from 0.
    FeatureMatrix x = random_matrix(rows, in, rng.next());
    for (double& v : x.storage())
      if (std::abs(v) < 1e-3) v = 0.5;
    const FeatureMatrix gr = random_matrix(rows, in, rng.next());
    auto loss_relu = [&](std::span<const double> xv) {
      return dot(gr, relu_forward(FeatureMatrix(rows, in, std::vector<double>(xv.begin(), xv.end()))));
    };
    worst = std::max(worst, vector_relative_error(relu_backward(x, gr).storage(), numeric_gradient(x.storage(), loss_relu)));

    // Cross-entropy over a random mask.
    const std::size_t classes = 2 + rng.below(4);
    const FeatureMatrix logits = random_matrix(rows, classes, rng.next(), -3, 3);
    std::vector<int> labels(rows);
    for (int& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint32_t>(classes)));
    std::vector<std::int32_t> mask;
    for (std::size_t r = 0; r < rows; ++r)
      if (r == 0 || rng.uniform() < 0.6) mask.push_back(static_cast<std::int32_t>(r));
    const auto ce = masked_cross_entropy(logits, labels, mask);
    auto loss_ce = [&](std::span<const double> lv) {
      return masked_cross_entropy(FeatureMatrix(rows, classes, std::vector<double>(lv.begin(), lv.end())), labels, mask).loss;
    };
    worst = std::max(worst, vector_relative_error(ce.grad_logits.storage(), numeric_gradient(logits.storage(), loss_ce)));
  }
  return {"layer_gradients", worst < 1e-6, "max_rel_err=" + format_sci(worst)};
}

inline CheckResult check_path_conv_gradients(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Edge> edges;
  const NodeId n = 20;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < 0.2) edges.emplace_back(u, v);
  const Graph g = Graph::from_edge_list(edges, n);
  const int k = 5;
  const std::size_t c = 3;
  const PathSet paths = sample_paths(g, {k, 4, rng.next()});
  const FeatureMatrix f = random_matrix(static_cast<std::size_t>(n), c, rng.next());
  const FeatureMatrix go = random_matrix(static_cast<std::size_t>(n), c, rng.next());
  std::vector<double> s(c * k);
  for (double& v : s) v = rng.uniform(-1, 1);
  const auto gr = path_conv_backward(paths, f, KernelSlice{s, k}, go);
  auto loss_f = [&](std::span<const double> fv) {
    return dot(go, path_conv_forward(paths, FeatureMatrix(f.rows(), c, std::vector<double>(fv.begin(), fv.end())),
                                     KernelSlice{s, k}));
  };
  auto loss_s = [&](std::span<const double> sv) { return dot(go, path_conv_forward(paths, f, KernelSlice{sv, k})); };
  const double worst = std::max(vector_relative_error(gr.grad_features.storage(), numeric_gradient(f.storage(), loss_f)),
                                vector_relative_error(gr.grad_kernel, numeric_gradient(s, loss_s)));
  return {"path_conv_gradients", worst < 1e-6, "max_rel_err=" + format_sci(worst)};
}

}  // namespace pathgcn::verify
