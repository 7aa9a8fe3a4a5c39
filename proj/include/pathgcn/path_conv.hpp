#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pathgcn/graph.hpp"
#include "pathgcn/matrix.hpp"
#include "pathgcn/path_sampler.hpp"
#include "pathgcn/random.hpp"

namespace pathgcn {

enum class KernelVariant { Global, PerLayer, DepthWise };

inline const char* to_string(KernelVariant v) {
  switch (v) {
    case KernelVariant::Global: return "global";
    case KernelVariant::PerLayer: return "per_layer";
    case KernelVariant::DepthWise: return "depthwise";
  }
  return "?";
}

inline KernelVariant parse_kernel_variant(const std::string& s) {
  if (s == "global") return KernelVariant::Global;
  if (s == "per_layer" || s == "perlayer") return KernelVariant::PerLayer;
  if (s == "depthwise" || s == "depth_wise") return KernelVariant::DepthWise;
  throw std::invalid_argument("unknown kernel variant '" + s + "'");
}

/// Weights of one layer's path convolution: either one length-k vector shared
/// by all channels, or one length-k vector per channel (c*k, channel-major).
struct KernelSlice {
  std::span<const double> weights;
  int length = 0;

  bool per_channel() const noexcept { return weights.size() != static_cast<std::size_t>(length); }
  double at(std::size_t ch, int i) const noexcept {
    return per_channel() ? weights[ch * length + i] : weights[i];
  }
  void check(std::size_t channels, const char* where) const {
    const bool ok = length >= 1 && (weights.size() == static_cast<std::size_t>(length) ||
                                    weights.size() == channels * static_cast<std::size_t>(length));
    require_shape(ok, where,
                  "kernel slice of " + std::to_string(weights.size()) + " weights for k=" +
                      std::to_string(length) + ", c=" + std::to_string(channels));
  }
};

/// Learnable spatial weights for all layers: k (Global), L x k (PerLayer) or
/// L x c x k (DepthWise).
class SpatialKernel {
 public:
  SpatialKernel() = default;
  SpatialKernel(KernelVariant variant, int layers, int channels, int length)
      : variant_(variant), layers_(layers), channels_(channels), length_(length) {
    if (length < 1 || layers < 0 || channels < 1)
      throw std::invalid_argument("SpatialKernel: invalid shape");
    weights_.assign(storage_size(), 0.0);
  }

  /// Uniform in [-1/k, 1/k] with tap 0 near 1/k.
  /// Tap 0 starts at `center` (1/k when not given) plus 10% noise, the rest uniform in [-1/k, 1/k].
  static SpatialKernel initialized(KernelVariant variant, int layers, int channels, int length,
                                   std::uint64_t seed, std::optional<double> center = std::nullopt) {
    SpatialKernel s(variant, layers, channels, length);
    SplitMix64 rng(seed);
    const double a = 1.0 / length;
    const double c0 = center.value_or(a);
    const std::size_t k = static_cast<std::size_t>(length);
    for (std::size_t idx = 0; idx < s.weights_.size(); ++idx) {
      s.weights_[idx] = idx % k == 0 ? c0 + rng.uniform(-0.1 * a, 0.1 * a) : rng.uniform(-a, a);
    }
    return s;
  }

  KernelVariant variant() const noexcept { return variant_; }
  int layers() const noexcept { return layers_; }
  int channels() const noexcept { return channels_; }
  int length() const noexcept { return length_; }

  std::size_t slice_size() const noexcept {
    return variant_ == KernelVariant::DepthWise ? static_cast<std::size_t>(channels_) * length_
                                                : static_cast<std::size_t>(length_);
  }
  std::size_t storage_size() const noexcept {
    return variant_ == KernelVariant::Global ? slice_size() : slice_size() * layers_;
  }
  std::size_t slice_offset(int layer) const noexcept {
    return variant_ == KernelVariant::Global ? 0 : slice_size() * static_cast<std::size_t>(layer);
  }

  KernelSlice slice(int layer) const noexcept {
    return {std::span<const double>(weights_).subspan(slice_offset(layer), slice_size()), length_};
  }
  std::span<double> slice_values(int layer) noexcept {
    return std::span<double>(weights_).subspan(slice_offset(layer), slice_size());
  }

  std::vector<double>& values() noexcept { return weights_; }
  const std::vector<double>& values() const noexcept { return weights_; }

  friend bool operator==(const SpatialKernel&, const SpatialKernel&) = default;

 private:
  KernelVariant variant_ = KernelVariant::DepthWise;
  int layers_ = 0;
  int channels_ = 1;
  int length_ = 1;
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Stochastic form: average of weighted sums along sampled walks.

/// out[j][ch] = (1/p) sum_w sum_i s(ch,i) f[paths[j][w][i]][ch]
inline FeatureMatrix path_conv_forward(const PathSet& paths, const FeatureMatrix& f,
                                       const KernelSlice& s) {
  require_shape(static_cast<std::size_t>(paths.num_origins()) == f.rows(), "path_conv_forward",
                "path origins vs feature rows");
  require_shape(s.length == paths.length(), "path_conv_forward", "kernel length vs path length");
  s.check(f.cols(), "path_conv_forward");
  const std::size_t c = f.cols();
  const int p = paths.paths_per_node();
  const int k = paths.length();
  FeatureMatrix out(f.rows(), c);
  std::vector<double> acc(c);
  for (NodeId j = 0; j < paths.num_origins(); ++j) {
    auto dst = out.row(j);
    for (int w = 0; w < p; ++w) {
      auto walk = paths.walk(j, w);
      {
        auto src = f.row(walk[0]);
        for (std::size_t ch = 0; ch < c; ++ch) acc[ch] = s.at(ch, 0) * src[ch];
      }
      for (int i = 1; i < k; ++i) {
        auto src = f.row(walk[i]);
        for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += s.at(ch, i) * src[ch];
      }
      // Running mean: exact when every walk gives the same value.
      const double inv = 1.0 / (w + 1);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += (acc[ch] - dst[ch]) * inv;
    }
  }
  return out;
}

struct PathConvGrads {
  FeatureMatrix grad_features;
  std::vector<double> grad_kernel;  // same layout as the slice
};

/// Exact adjoint of path_conv_forward for the given (fixed) paths.
inline PathConvGrads path_conv_backward(const PathSet& paths, const FeatureMatrix& f,
                                        const KernelSlice& s, const FeatureMatrix& grad_out) {
  require_shape(static_cast<std::size_t>(paths.num_origins()) == f.rows(), "path_conv_backward",
                "path origins vs feature rows");
  require_shape(grad_out.same_shape(f), "path_conv_backward", "grad_out vs features");
  require_shape(s.length == paths.length(), "path_conv_backward", "kernel length vs path length");
  s.check(f.cols(), "path_conv_backward");
  const std::size_t c = f.cols();
  const int p = paths.paths_per_node();
  const int k = paths.length();
  const bool per_channel = s.per_channel();
  const double inv_p = 1.0 / p;

  PathConvGrads g{FeatureMatrix(f.rows(), c), std::vector<double>(s.weights.size(), 0.0)};
  std::vector<double> scaled(c);
  for (NodeId j = 0; j < paths.num_origins(); ++j) {
    auto go = grad_out.row(j);
    for (std::size_t ch = 0; ch < c; ++ch) scaled[ch] = go[ch] * inv_p;
    for (int w = 0; w < p; ++w) {
      auto walk = paths.walk(j, w);
      for (int i = 0; i < k; ++i) {
        const NodeId v = walk[i];
        auto gf = g.grad_features.row(v);
        auto fv = f.row(v);
        if (per_channel) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            gf[ch] += s.weights[ch * k + i] * scaled[ch];
            g.grad_kernel[ch * k + i] += scaled[ch] * fv[ch];
          }
        } else {
          const double si = s.weights[i];
          double gs = 0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            gf[ch] += si * scaled[ch];
            gs += scaled[ch] * fv[ch];
          }
          g.grad_kernel[i] += gs;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Deterministic form: sum_i s_i P^i f with P = D^-1 A, the expectation of the
// stochastic form over uniform walks.

/// [f, P f, P^2 f, ..., P^{k-1} f]
inline std::vector<FeatureMatrix> walk_powers(const Graph& g, const FeatureMatrix& f, int k) {
  std::vector<FeatureMatrix> powers;
  powers.reserve(static_cast<std::size_t>(k));
  powers.push_back(f);
  for (int i = 1; i < k; ++i) powers.push_back(walk_expectation_apply(g, powers.back()));
  return powers;
}

inline FeatureMatrix combine_powers(std::span<const FeatureMatrix> powers, const KernelSlice& s) {
  const std::size_t c = powers.front().cols();
  FeatureMatrix out(powers.front().rows(), c);
  for (int i = 0; i < s.length; ++i) {
    const auto& pw = powers[i];
    for (std::size_t r = 0; r < pw.rows(); ++r) {
      auto src = pw.row(r);
      auto dst = out.row(r);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += s.at(ch, i) * src[ch];
    }
  }
  return out;
}

inline FeatureMatrix expected_conv(const Graph& g, const FeatureMatrix& f, const KernelSlice& s) {
  detail::require_rows(g, f, "expected_conv");
  s.check(f.cols(), "expected_conv");
  return combine_powers(walk_powers(g, f, s.length), s);
}

/// Adjoint of expected_conv. `powers` must come from walk_powers(g, f, k).
inline PathConvGrads expected_conv_backward(const Graph& g, std::span<const FeatureMatrix> powers,
                                            const KernelSlice& s, const FeatureMatrix& grad_out) {
  require_shape(powers.size() == static_cast<std::size_t>(s.length), "expected_conv_backward",
                "power count vs kernel length");
  require_shape(grad_out.same_shape(powers.front()), "expected_conv_backward", "grad_out vs features");
  const std::size_t c = grad_out.cols();
  const int k = s.length;
  PathConvGrads out{FeatureMatrix(grad_out.rows(), c), std::vector<double>(s.weights.size(), 0.0)};
  for (int i = 0; i < k; ++i) {
    const auto& pw = powers[i];
    for (std::size_t r = 0; r < pw.rows(); ++r) {
      auto a = pw.row(r);
      auto b = grad_out.row(r);
      if (s.per_channel()) {
        for (std::size_t ch = 0; ch < c; ++ch) out.grad_kernel[ch * k + i] += a[ch] * b[ch];
      } else {
        double acc = 0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += a[ch] * b[ch];
        out.grad_kernel[i] += acc;
      }
    }
  }
  // Horner on P^T = A D^-1: grad_f = sum_i s_i (P^T)^i grad_out.
  FeatureMatrix acc(grad_out.rows(), c);
  for (int i = k - 1; i >= 0; --i) {
    if (i != k - 1) acc = transition_apply(g, acc);
    for (std::size_t r = 0; r < acc.rows(); ++r) {
      auto dst = acc.row(r);
      auto src = grad_out.row(r);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += s.at(ch, i) * src[ch];
    }
  }
  out.grad_features = std::move(acc);
  return out;
}

// ---------------------------------------------------------------------------

/// RMS gap between the sampled and the expected convolution, per path count.
inline std::vector<std::pair<int, double>> monte_carlo_error(const Graph& g, const FeatureMatrix& f,
                                                             const KernelSlice& s,
                                                             std::span<const int> path_counts,
                                                             std::uint64_t seed) {
  const FeatureMatrix expected = expected_conv(g, f, s);
  std::vector<std::pair<int, double>> out;
  for (int p : path_counts) {
    if (p < 1) throw std::invalid_argument("monte_carlo_error: path count must be >= 1");
    const PathSet paths = sample_paths(g, {s.length, p, seed});
    const FeatureMatrix sampled = path_conv_forward(paths, f, s);
    double sq = 0;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      const double d = sampled.storage()[i] - expected.storage()[i];
      sq += d * d;
    }
    out.emplace_back(p, std::sqrt(sq / static_cast<double>(sampled.size())));
  }
  return out;
}

/// Least-squares slope and intercept of log(err) against log(p).
inline std::pair<double, double> loglog_fit(std::span<const std::pair<int, double>> errors) {
  const double m = static_cast<double>(errors.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [p, e] : errors) {
    const double x = std::log(static_cast<double>(p));
    const double y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return {slope, (sy - slope * sx) / m};
}

using SparseWeights = std::map<NodeId, double>;

/// Weight each node receives when the sampled convolution is evaluated at `origin`.
inline SparseWeights effective_kernel_stochastic(const PathSet& paths, std::span<const double> s,
                                                 NodeId origin) {
  if (origin < 0 || origin >= paths.num_origins())
    throw std::out_of_range("effective_kernel: origin " + std::to_string(origin) + " out of range");
  require_shape(s.size() == static_cast<std::size_t>(paths.length()), "effective_kernel",
                "kernel length vs path length");
  SparseWeights out;
  const double inv_p = 1.0 / paths.paths_per_node();
  for (int w = 0; w < paths.paths_per_node(); ++w) {
    auto walk = paths.walk(origin, w);
    for (std::size_t i = 0; i < walk.size(); ++i)
      if (s[i] != 0.0) out[walk[i]] += s[i] * inv_p;
  }
  std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
  return out;
}

/// Row `origin` of sum_i s_i P^i.
inline SparseWeights effective_kernel_deterministic(const Graph& g, std::span<const double> s,
                                                    NodeId origin) {
  if (origin < 0 || origin >= g.num_nodes())
    throw std::out_of_range("effective_kernel: origin " + std::to_string(origin) + " out of range");
  FeatureMatrix e(static_cast<std::size_t>(g.num_nodes()), 1);
  e(origin, 0) = 1.0;
  std::vector<double> row(static_cast<std::size_t>(g.num_nodes()), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) e = transition_apply(g, e);
    for (std::size_t v = 0; v < row.size(); ++v) row[v] += s[i] * e(v, 0);
  }
  SparseWeights out;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (row[v] != 0.0) out[v] = row[v];
  return out;
}

}  // namespace pathgcn
