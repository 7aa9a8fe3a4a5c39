#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathgcn/matrix.hpp"
#include "pathgcn/random.hpp"

namespace pathgcn {

/// Optimizer group. Embedding and classifier use `oc`; spatial kernels and
/// the 1x1 convolutions inside pathGCN blocks use `gcn`.
enum class ParamGroup { Gcn, Oc };

inline const char* to_string(ParamGroup g) { return g == ParamGroup::Gcn ? "gcn" : "oc"; }
inline ParamGroup parse_param_group(const std::string& s) {
  if (s == "gcn") return ParamGroup::Gcn;
  if (s == "oc") return ParamGroup::Oc;
  throw std::invalid_argument("unknown parameter group '" + s + "'");
}

/// 1x1 convolution: in x out weights plus a bias per output channel.
class DenseParam {
 public:
  DenseParam() = default;
  DenseParam(std::size_t in, std::size_t out, ParamGroup group)
      : weights_(in, out), bias_(out, 0.0), group_(group) {}

  /// Glorot-uniform weights, zero bias.
  static DenseParam glorot(std::size_t in, std::size_t out, ParamGroup group, std::uint64_t seed) {
    DenseParam p(in, out, group);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    SplitMix64 rng(seed);
    for (double& w : p.weights_.storage()) w = rng.uniform(-limit, limit);
    return p;
  }

  /// He-uniform weights (gain sqrt 2 for ReLU), zero bias.
  static DenseParam he(std::size_t in, std::size_t out, ParamGroup group, std::uint64_t seed) {
    DenseParam p(in, out, group);
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    SplitMix64 rng(seed);
    for (double& w : p.weights_.storage()) w = rng.uniform(-limit, limit);
    return p;
  }

  std::size_t in_channels() const noexcept { return weights_.rows(); }
  std::size_t out_channels() const noexcept { return weights_.cols(); }
  ParamGroup group() const noexcept { return group_; }

  FeatureMatrix& weights() noexcept { return weights_; }
  const FeatureMatrix& weights() const noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  friend bool operator==(const DenseParam&, const DenseParam&) = default;

 private:
  FeatureMatrix weights_;
  std::vector<double> bias_;
  ParamGroup group_ = ParamGroup::Gcn;
};

/// out = f W + bias. Zero input entries are skipped, which matters for sparse
/// bag-of-words features.
inline FeatureMatrix pointwise_conv_forward(const FeatureMatrix& f, const DenseParam& w) {
  require_shape(f.cols() == w.in_channels(), "pointwise_conv_forward",
                std::to_string(f.cols()) + " input channels vs " + std::to_string(w.in_channels()));
  const std::size_t out_c = w.out_channels();
  FeatureMatrix out(f.rows(), out_c);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(w.bias().begin(), w.bias().end(), dst.begin());
    auto src = f.row(r);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double a = src[i];
      if (a == 0.0) continue;
      auto wrow = w.weights().row(i);
      for (std::size_t o = 0; o < out_c; ++o) dst[o] += a * wrow[o];
    }
  }
  return out;
}

struct DenseGrads {
  FeatureMatrix grad_input;  // empty when not requested
  FeatureMatrix grad_weights;
  std::vector<double> grad_bias;
};

inline DenseGrads pointwise_conv_backward(const FeatureMatrix& f, const DenseParam& w,
                                          const FeatureMatrix& grad_out, bool need_input_grad = true) {
  require_shape(f.cols() == w.in_channels(), "pointwise_conv_backward", "input channels");
  require_shape(grad_out.rows() == f.rows() && grad_out.cols() == w.out_channels(),
                "pointwise_conv_backward", "grad_out shape");
  const std::size_t in_c = w.in_channels();
  const std::size_t out_c = w.out_channels();
  DenseGrads g{FeatureMatrix(), FeatureMatrix(in_c, out_c), std::vector<double>(out_c, 0.0)};
  if (need_input_grad) g.grad_input = FeatureMatrix(f.rows(), in_c);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    auto go = grad_out.row(r);
    for (std::size_t o = 0; o < out_c; ++o) g.grad_bias[o] += go[o];
    auto src = f.row(r);
    for (std::size_t i = 0; i < in_c; ++i) {
      const double a = src[i];
      if (a == 0.0) continue;
      auto gw = g.grad_weights.row(i);
      for (std::size_t o = 0; o < out_c; ++o) gw[o] += a * go[o];
    }
    if (need_input_grad) {
      auto gi = g.grad_input.row(r);
      for (std::size_t i = 0; i < in_c; ++i) {
        auto wrow = w.weights().row(i);
        double acc = 0;
        for (std::size_t o = 0; o < out_c; ++o) acc += wrow[o] * go[o];
        gi[i] = acc;
      }
    }
  }
  return g;
}

inline FeatureMatrix relu_forward(const FeatureMatrix& x) {
  FeatureMatrix out = x;
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Subgradient 0 at x == 0.
inline FeatureMatrix relu_backward(const FeatureMatrix& x, const FeatureMatrix& grad_out) {
  require_shape(x.same_shape(grad_out), "relu_backward", "grad_out vs input");
  FeatureMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.storage()[i] = x.storage()[i] > 0.0 ? grad_out.storage()[i] : 0.0;
  return out;
}

/// Inverted-dropout mask; entries are 0 or 1/(1-p_drop). An empty mask means identity.
struct DropoutMask {
  double drop_probability = 0.0;
  std::vector<double> scale;

  bool is_identity() const noexcept { return scale.empty(); }
};

struct DropoutResult {
  FeatureMatrix output;
  DropoutMask mask;
};

inline DropoutResult dropout_forward(const FeatureMatrix& f, double p_drop, std::uint64_t seed,
                                     bool training) {
  if (!(p_drop >= 0.0 && p_drop < 1.0))
    throw std::invalid_argument("dropout_forward: p_drop must lie in [0, 1)");
  if (!training || p_drop == 0.0) return {f, DropoutMask{p_drop, {}}};
  DropoutResult r{FeatureMatrix(f.rows(), f.cols()), DropoutMask{p_drop, std::vector<double>(f.size())}};
  const double keep_scale = 1.0 / (1.0 - p_drop);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double m = rng.uniform() < p_drop ? 0.0 : keep_scale;
    r.mask.scale[i] = m;
    r.output.storage()[i] = f.storage()[i] * m;
  }
  return r;
}

inline FeatureMatrix dropout_backward(const DropoutMask& mask, const FeatureMatrix& grad_out) {
  if (mask.is_identity()) return grad_out;
  require_shape(mask.scale.size() == grad_out.size(), "dropout_backward", "mask vs grad_out");
  FeatureMatrix out(grad_out.rows(), grad_out.cols());
  for (std::size_t i = 0; i < grad_out.size(); ++i) out.storage()[i] = grad_out.storage()[i] * mask.scale[i];
  return out;
}

struct LossResult {
  double loss = 0.0;
  FeatureMatrix grad_logits;
};

/// Mean softmax cross-entropy over the rows listed in `mask`.
inline LossResult masked_cross_entropy(const FeatureMatrix& logits, std::span<const int> labels,
                                       std::span<const std::int32_t> mask) {
  if (mask.empty()) throw std::invalid_argument("masked_cross_entropy: empty mask");
  require_shape(labels.size() == logits.rows(), "masked_cross_entropy", "labels vs logits rows");
  const std::size_t classes = logits.cols();
  LossResult r{0.0, FeatureMatrix(logits.rows(), classes)};
  const double inv_m = 1.0 / static_cast<double>(mask.size());
  std::vector<double> prob(classes);
  for (std::int32_t node : mask) {
    if (node < 0 || static_cast<std::size_t>(node) >= logits.rows())
      throw std::out_of_range("masked_cross_entropy: node " + std::to_string(node) + " out of range");
    const int y = labels[node];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::out_of_range("masked_cross_entropy: label " + std::to_string(y) + " of node " +
                              std::to_string(node) + " is not a valid class");
    auto row = logits.row(node);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double mx = row[top];
    double rest = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(row[c] - mx);
      if (c != top) rest += prob[c];
    }
    const double z = 1.0 + rest;
    r.loss += (std::log1p(rest) - (row[y] - mx)) * inv_m;
    auto g = r.grad_logits.row(node);
    for (std::size_t c = 0; c < classes; ++c) g[c] = (prob[c] / z - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_m;
  }
  return r;
}

inline int argmax_row(const FeatureMatrix& m, std::size_t r) {
  auto row = m.row(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

inline double accuracy(const FeatureMatrix& logits, std::span<const int> labels,
                       std::span<const std::int32_t> nodes) {
  if (nodes.empty()) throw std::invalid_argument("accuracy: empty node set");
  std::size_t hit = 0;
  for (std::int32_t v : nodes) hit += argmax_row(logits, v) == labels[v] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

// ---------------------------------------------------------------------------
// Adam

/// Named view of one trainable tensor and its gradient.
struct ParamRef {
  std::string name;
  ParamGroup group;
  std::span<double> values;
  std::span<const double> grads;
};

struct GroupHyper {
  double lr = 1e-3;
  double weight_decay = 0.0;
};

class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  AdamOptimizer(GroupHyper gcn, GroupHyper oc) : gcn_(gcn), oc_(oc) {}

  std::int64_t step_count() const noexcept { return step_; }

  /// One bias-corrected Adam update; weight decay enters as g + wd * theta.
  /// All gradients are validated before any parameter moves.
  void step(std::span<const ParamRef> params) {
    for (const auto& p : params) {
      if (p.values.size() != p.grads.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch for '" + p.name + "'");
      for (double g : p.grads)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient in '" + p.name + "'");
    }
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.values.size(), 0.0);
        second_.emplace_back(p.values.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed");
    ++step_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      const auto& p = params[t];
      const GroupHyper& h = p.group == ParamGroup::Gcn ? gcn_ : oc_;
      auto& m = first_[t];
      auto& v = second_[t];
      if (m.size() != p.values.size()) throw std::invalid_argument("adam_step: parameter shape changed");
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double g = p.grads[i] + h.weight_decay * p.values[i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p.values[i] -= h.lr * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

 private:
  GroupHyper gcn_;
  GroupHyper oc_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace pathgcn
