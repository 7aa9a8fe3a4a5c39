#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathgcn/graph.hpp"
#include "pathgcn/matrix.hpp"
#include "pathgcn/nn.hpp"
#include "pathgcn/path_conv.hpp"
#include "pathgcn/path_sampler.hpp"
#include "pathgcn/random.hpp"

namespace pathgcn {

enum class ConvMode { Stochastic, Deterministic };

inline const char* to_string(ConvMode m) { return m == ConvMode::Stochastic ? "stochastic" : "deterministic"; }
inline ConvMode parse_conv_mode(const std::string& s) {
  if (s == "stochastic") return ConvMode::Stochastic;
  if (s == "deterministic") return ConvMode::Deterministic;
  throw std::invalid_argument("unknown mode '" + s + "' (expected stochastic|deterministic)");
}

// spread: Glorot block 1x1s, kernel tap 0 near 1/k. delta: He block 1x1s, tap 0 near 1.
enum class InitScheme { Spread, Delta };

inline const char* to_string(InitScheme s) { return s == InitScheme::Spread ? "spread" : "delta"; }
inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "spread") return InitScheme::Spread;
  if (s == "delta") return InitScheme::Delta;
  throw std::invalid_argument("unknown init '" + s + "' (expected spread|delta)");
}

/// Hyperparameters. Defaults are the Cora semi-supervised setting.
struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int path_length = 5;
  int paths = 5;
  double dropout = 0.6;
  KernelVariant variant = KernelVariant::DepthWise;
  double lr_gcn = 1e-3;
  double wd_gcn = 2e-5;
  double lr_oc = 1e-2;
  double wd_oc = 1e-5;
  int max_epochs = 1500;
  int patience = 100;
  std::uint64_t seed = 0;
  ConvMode train_mode = ConvMode::Stochastic;
  ConvMode inference_mode = ConvMode::Deterministic;
  int eval_repeats = 10;
  InitScheme init = InitScheme::Spread;

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (layers < 0) fail("layers must be >= 0");
    if (hidden < 1) fail("hidden must be >= 1");
    if (path_length < 1) fail("path_length must be >= 1");
    if (paths < 1) fail("paths must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (lr_gcn < 0 || lr_oc < 0 || wd_gcn < 0 || wd_oc < 0) fail("learning rates and weight decays must be >= 0");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 0) fail("patience must be >= 0");
    if (eval_repeats < 1) fail("eval_repeats must be >= 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Seed streams derived from ModelConfig::seed.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainPaths = 2;
inline constexpr std::uint64_t kEvalPaths = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kBench = 5;
}  // namespace streams

/// embedding 1x1 -> L x [pathConv -> 1x1 -> ReLU] -> classifier 1x1
struct PathGCNModel {
  DenseParam embedding;
  std::vector<DenseParam> blocks;
  DenseParam classifier;
  SpatialKernel kernel;

  static PathGCNModel create(std::size_t in_channels, std::size_t num_classes, const ModelConfig& cfg) {
    cfg.validate();
    const auto c = static_cast<std::size_t>(cfg.hidden);
    const std::uint64_t base = mix_seed(cfg.seed, streams::kInit);
    PathGCNModel m;
    m.embedding = DenseParam::glorot(in_channels, c, ParamGroup::Oc, mix_seed(base, 0));
    const bool delta = cfg.init == InitScheme::Delta;
    for (int l = 0; l < cfg.layers; ++l) {
      const std::uint64_t s = mix_seed(base, 100 + l);
      m.blocks.push_back(delta ? DenseParam::he(c, c, ParamGroup::Gcn, s) : DenseParam::glorot(c, c, ParamGroup::Gcn, s));
    }
    m.classifier = DenseParam::glorot(c, num_classes, ParamGroup::Oc, mix_seed(base, 1));
    m.kernel = SpatialKernel::initialized(cfg.variant, cfg.layers, cfg.hidden, cfg.path_length, mix_seed(base, 2),
                                          delta ? std::optional<double>(1.0) : std::nullopt);
    return m;
  }

  int num_layers() const noexcept { return static_cast<int>(blocks.size()); }

  friend bool operator==(const PathGCNModel&, const PathGCNModel&) = default;
};

/// Gradients laid out like PathGCNModel.
struct ModelGrads {
  FeatureMatrix embedding_w;
  std::vector<double> embedding_b;
  std::vector<FeatureMatrix> block_w;
  std::vector<std::vector<double>> block_b;
  FeatureMatrix classifier_w;
  std::vector<double> classifier_b;
  std::vector<double> kernel;
};

/// Trainable tensors in canonical order (also the checkpoint order).
inline std::vector<ParamRef> param_refs(PathGCNModel& m, const ModelGrads& g) {
  std::vector<ParamRef> out;
  out.push_back({"embedding.weight", ParamGroup::Oc, m.embedding.weights().values(), g.embedding_w.values()});
  out.push_back({"embedding.bias", ParamGroup::Oc, m.embedding.bias(), g.embedding_b});
  out.push_back({"kernel", ParamGroup::Gcn, m.kernel.values(), g.kernel});
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    out.push_back({"block" + std::to_string(l) + ".weight", ParamGroup::Gcn, m.blocks[l].weights().values(),
                   g.block_w[l].values()});
    out.push_back({"block" + std::to_string(l) + ".bias", ParamGroup::Gcn, m.blocks[l].bias(), g.block_b[l]});
  }
  out.push_back({"classifier.weight", ParamGroup::Oc, m.classifier.weights().values(), g.classifier_w.values()});
  out.push_back({"classifier.bias", ParamGroup::Oc, m.classifier.bias(), g.classifier_b});
  return out;
}

struct ForwardOptions {
  ConvMode mode = ConvMode::Deterministic;
  std::span<const PathSet> paths;  // one per layer, stochastic mode only
  bool training = false;
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;
};

/// Everything backward needs from a forward pass.
struct ForwardTrace {
  ConvMode mode = ConvMode::Deterministic;
  DropoutMask input_mask;
  FeatureMatrix input;            // after dropout
  FeatureMatrix embedding_pre;    // before ReLU
  std::vector<FeatureMatrix> block_in;      // activation entering block l (stochastic mode)
  std::vector<std::vector<FeatureMatrix>> block_powers;  // deterministic mode
  std::vector<FeatureMatrix> block_conv;    // spatial output of block l
  std::vector<FeatureMatrix> block_pre;     // before ReLU
  DropoutMask head_mask;
  FeatureMatrix head_input;       // after dropout
  FeatureMatrix logits;

  const FeatureMatrix& block_input(int l) const {
    return mode == ConvMode::Stochastic ? block_in[l] : block_powers[l].front();
  }
};

namespace detail {
inline void require_finite(const FeatureMatrix& m, const std::string& where) {
  if (!all_finite(m)) throw std::runtime_error("forward: non-finite activation at " + where);
}
}  // namespace detail

inline ForwardTrace forward_trace(const PathGCNModel& model, const Graph& g, const FeatureMatrix& x,
                                  const ForwardOptions& opt) {
  detail::require_rows(g, x, "forward");
  const int L = model.num_layers();
  if (opt.mode == ConvMode::Stochastic)
    require_shape(opt.paths.size() == static_cast<std::size_t>(L), "forward",
                  "need one path set per layer, got " + std::to_string(opt.paths.size()));
  ForwardTrace t;
  t.mode = opt.mode;
  {
    auto d = dropout_forward(x, opt.dropout, mix_seed(opt.dropout_seed, 0), opt.training);
    t.input = std::move(d.output);
    t.input_mask = std::move(d.mask);
  }
  t.embedding_pre = pointwise_conv_forward(t.input, model.embedding);
  detail::require_finite(t.embedding_pre, "embedding");
  FeatureMatrix act = relu_forward(t.embedding_pre);
  for (int l = 0; l < L; ++l) {
    const KernelSlice s = model.kernel.slice(l);
    FeatureMatrix conv;
    if (opt.mode == ConvMode::Stochastic) {
      conv = path_conv_forward(opt.paths[l], act, s);
      t.block_powers.emplace_back();
    } else {
      auto powers = walk_powers(g, act, s.length);
      conv = combine_powers(powers, s);
      t.block_powers.push_back(std::move(powers));
    }
    FeatureMatrix pre = pointwise_conv_forward(conv, model.blocks[l]);
    detail::require_finite(pre, "layer " + std::to_string(l));
    t.block_in.push_back(opt.mode == ConvMode::Stochastic ? std::move(act) : FeatureMatrix());
    t.block_conv.push_back(std::move(conv));
    act = relu_forward(pre);
    t.block_pre.push_back(std::move(pre));
  }
  {
    auto d = dropout_forward(act, opt.dropout, mix_seed(opt.dropout_seed, 1), opt.training);
    t.head_input = std::move(d.output);
    t.head_mask = std::move(d.mask);
  }
  t.logits = pointwise_conv_forward(t.head_input, model.classifier);
  detail::require_finite(t.logits, "classifier");
  return t;
}

inline FeatureMatrix forward(const PathGCNModel& model, const Graph& g, const FeatureMatrix& x,
                             const ForwardOptions& opt) {
  return forward_trace(model, g, x, opt).logits;
}


/// Reverse pass through forward_trace. `paths` must be the ones used forward.
inline ModelGrads backward(const PathGCNModel& model, const Graph& g, const ForwardTrace& t,
                           std::span<const PathSet> paths, const FeatureMatrix& grad_logits) {
  const int L = model.num_layers();
  ModelGrads out;
  out.kernel.assign(model.kernel.values().size(), 0.0);
  out.block_w.resize(static_cast<std::size_t>(L));
  out.block_b.resize(static_cast<std::size_t>(L));

  auto head = pointwise_conv_backward(t.head_input, model.classifier, grad_logits);
  out.classifier_w = std::move(head.grad_weights);
  out.classifier_b = std::move(head.grad_bias);
  FeatureMatrix grad_act = dropout_backward(t.head_mask, head.grad_input);

  for (int l = L - 1; l >= 0; --l) {
    const FeatureMatrix grad_pre = relu_backward(t.block_pre[l], grad_act);
    auto mix = pointwise_conv_backward(t.block_conv[l], model.blocks[l], grad_pre);
    out.block_w[l] = std::move(mix.grad_weights);
    out.block_b[l] = std::move(mix.grad_bias);
    const KernelSlice s = model.kernel.slice(l);
    PathConvGrads conv = t.mode == ConvMode::Stochastic
                             ? path_conv_backward(paths[l], t.block_in[l], s, mix.grad_input)
                             : expected_conv_backward(g, t.block_powers[l], s, mix.grad_input);
    const std::size_t off = model.kernel.slice_offset(l);
    for (std::size_t i = 0; i < conv.grad_kernel.size(); ++i) out.kernel[off + i] += conv.grad_kernel[i];
    grad_act = std::move(conv.grad_features);
  }

  const FeatureMatrix grad_emb = relu_backward(t.embedding_pre, grad_act);
  auto emb = pointwise_conv_backward(t.input, model.embedding, grad_emb, /*need_input_grad=*/false);
  out.embedding_w = std::move(emb.grad_weights);
  out.embedding_b = std::move(emb.grad_bias);
  return out;
}

/// One fresh path set per layer for a given (stream, iteration).
inline std::vector<PathSet> sample_layer_paths(const Graph& g, const ModelConfig& cfg, int layers,
                                               std::uint64_t stream, std::uint64_t iteration) {
  const WalkConfig walk{cfg.path_length, cfg.paths, mix_seed(cfg.seed, stream)};
  std::vector<PathSet> out;
  out.reserve(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l)
    out.push_back(resample(g, walk, iteration * static_cast<std::uint64_t>(layers) + l));
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct Split {
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> val;
  std::vector<std::int32_t> test;

  void validate(std::int32_t n) const {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto* set : {&train, &val, &test}) {
      for (std::int32_t v : *set) {
        if (v < 0 || v >= n) throw std::out_of_range("split: node " + std::to_string(v) + " out of range");
        if (seen[v]) throw std::invalid_argument("split: node " + std::to_string(v) + " appears twice");
        seen[v] = 1;
      }
    }
    if (train.empty()) throw std::invalid_argument("split: empty train set");
  }

  friend bool operator==(const Split&, const Split&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  PathGCNModel best_model;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int epoch)
      : std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// One full-batch optimizer step. Returns the training loss.
inline double train_step(PathGCNModel& model, AdamOptimizer& adam, const Graph& g, const FeatureMatrix& x,
                         std::span<const int> labels, std::span<const std::int32_t> train_nodes,
                         const ModelConfig& cfg, int epoch) {
  std::vector<PathSet> paths;
  if (cfg.train_mode == ConvMode::Stochastic)
    paths = sample_layer_paths(g, cfg, model.num_layers(), streams::kTrainPaths, static_cast<std::uint64_t>(epoch));
  ForwardOptions opt{cfg.train_mode, paths, true, cfg.dropout,
                     mix_seed(mix_seed(cfg.seed, streams::kDropout), static_cast<std::uint64_t>(epoch))};
  const ForwardTrace trace = forward_trace(model, g, x, opt);
  LossResult loss = masked_cross_entropy(trace.logits, labels, train_nodes);
  if (!std::isfinite(loss.loss)) throw TrainingDiverged(epoch);
  const ModelGrads grads = backward(model, g, trace, paths, loss.grad_logits);
  const auto refs = param_refs(model, grads);
  adam.step(refs);
  return loss.loss;
}

inline FeatureMatrix deterministic_logits(const PathGCNModel& model, const Graph& g, const FeatureMatrix& x) {
  return forward(model, g, x, ForwardOptions{});
}

/// Full-batch training with early stopping on validation accuracy (ties go to
/// the lower validation loss). Validation always uses the deterministic form.
inline TrainingReport train(PathGCNModel model, const Graph& g, const FeatureMatrix& x,
                            std::span<const int> labels, const Split& split, const ModelConfig& cfg,
                            const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  split.validate(g.num_nodes());
  if (split.val.empty()) throw std::invalid_argument("train: empty validation set");
  require_shape(labels.size() == static_cast<std::size_t>(g.num_nodes()), "train", "labels vs nodes");

  AdamOptimizer adam({cfg.lr_gcn, cfg.wd_gcn}, {cfg.lr_oc, cfg.wd_oc});
  TrainingReport report;
  report.best_model = model;
  int bad_epochs = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double loss = train_step(model, adam, g, x, labels, split.train, cfg, epoch);
    const FeatureMatrix logits = deterministic_logits(model, g, x);
    const double val_loss = masked_cross_entropy(logits, labels, split.val).loss;
    const double val_acc = accuracy(logits, labels, split.val);
    const EpochRecord rec{epoch, loss, val_acc, val_loss};
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool improved = report.best_epoch < 0 || val_acc > report.best_val_accuracy ||
                          (val_acc == report.best_val_accuracy && val_loss < report.best_val_loss);
    if (improved) {
      report.best_epoch = epoch;
      report.best_val_accuracy = val_acc;
      report.best_val_loss = val_loss;
      report.best_model = model;
      bad_epochs = 0;
    } else if (++bad_epochs > cfg.patience) {
      break;
    }
  }
  return report;
}

struct AccuracyStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> runs;
};

/// Deterministic: one pass with expected convolutions. Stochastic: `repeats`
/// passes with fresh paths; stddev is the sample standard deviation.
inline AccuracyStats evaluate(const PathGCNModel& model, const Graph& g, const FeatureMatrix& x,
                              std::span<const int> labels, std::span<const std::int32_t> nodes, ConvMode mode,
                              int repeats, const ModelConfig& cfg) {
  if (nodes.empty()) throw std::invalid_argument("evaluate: empty node set");
  AccuracyStats st;
  if (mode == ConvMode::Deterministic) {
    st.mean = accuracy(deterministic_logits(model, g, x), labels, nodes);
    st.runs = {st.mean};
    return st;
  }
  if (repeats < 1) throw std::invalid_argument("evaluate: repeats must be >= 1");
  for (int r = 0; r < repeats; ++r) {
    const auto paths = sample_layer_paths(g, cfg, model.num_layers(), streams::kEvalPaths, static_cast<std::uint64_t>(r));
    const FeatureMatrix logits = forward(model, g, x, ForwardOptions{ConvMode::Stochastic, paths});
    st.runs.push_back(accuracy(logits, labels, nodes));
  }
  for (double a : st.runs) st.mean += a;
  st.mean /= repeats;
  if (repeats > 1) {
    double sq = 0;
    for (double a : st.runs) sq += (a - st.mean) * (a - st.mean);
    st.stddev = std::sqrt(sq / (repeats - 1));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Timing

struct BenchReport {
  int repetitions = 0;
  double path_sampling_ms = 0.0;
  double train_step_ms = 0.0;
  double inference_stochastic_ms = 0.0;
  double inference_deterministic_ms = 0.0;
};

namespace detail {
template <typename Fn>
double median_ms(int reps, Fn&& fn) {
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn(r);
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return reps % 2 ? t[reps / 2] : 0.5 * (t[reps / 2 - 1] + t[reps / 2]);
}
}  // namespace detail

/// Median wall-clock per phase over `reps` runs, after one warm-up of each.
inline BenchReport benchmark(const PathGCNModel& model, const Graph& g, const FeatureMatrix& x,
                             std::span<const int> labels, std::span<const std::int32_t> train_nodes,
                             const ModelConfig& cfg, int reps = 20) {
  if (reps < 1) throw std::invalid_argument("benchmark: reps must be >= 1");
  const int L = model.num_layers();
  BenchReport rep;
  rep.repetitions = reps;
  PathGCNModel scratch = model;
  AdamOptimizer adam({cfg.lr_gcn, cfg.wd_gcn}, {cfg.lr_oc, cfg.wd_oc});
  ModelConfig stochastic = cfg;
  stochastic.train_mode = ConvMode::Stochastic;

  volatile std::size_t sink = 0;
  sample_layer_paths(g, cfg, L, streams::kBench, 0);
  rep.path_sampling_ms = detail::median_ms(reps, [&](int r) {
    sink = sink + sample_layer_paths(g, cfg, L, streams::kBench, static_cast<std::uint64_t>(r + 1)).size();
  });
  train_step(scratch, adam, g, x, labels, train_nodes, stochastic, 0);
  rep.train_step_ms = detail::median_ms(
      reps, [&](int r) { train_step(scratch, adam, g, x, labels, train_nodes, stochastic, r + 1); });
  rep.inference_stochastic_ms = detail::median_ms(reps, [&](int r) {
    const auto paths = sample_layer_paths(g, cfg, L, streams::kBench, static_cast<std::uint64_t>(1000 + r));
    sink = sink + forward(model, g, x, ForwardOptions{ConvMode::Stochastic, paths}).size();
  });
  rep.inference_deterministic_ms =
      detail::median_ms(reps, [&](int) { sink = sink + deterministic_logits(model, g, x).size(); });
  return rep;
}

}  // namespace pathgcn
