#include "pathgcn/model.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "pathgcn/bundle.hpp"

namespace pathgcn {
namespace {

using Eigen::MatrixXd;

MatrixXd dense_layer(const MatrixXd& h, const DenseParam& p) {
  MatrixXd out = h * oracle::to_eigen(p.weights());
  for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() += p.bias()[c];
  return out;
}

MatrixXd relu(const MatrixXd& m) { return m.cwiseMax(0.0); }

ModelConfig small_config(int layers, int k, KernelVariant variant) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.hidden = 6;
  cfg.path_length = k;
  cfg.paths = 3;
  cfg.variant = variant;
  cfg.dropout = 0.0;
  cfg.seed = 17;
  return cfg;
}

TEST(Forward, ZeroLayersIsTwoLayerMlp) {
  const int n = 15;
  const Graph g = Graph::from_edge_list(oracle::random_edges(n, 0.2, 1), n);
  const FeatureMatrix x = oracle::random_features(n, 5, 2);
  PathGCNModel m = PathGCNModel::create(5, 3, small_config(0, 4, KernelVariant::DepthWise));
  for (double& b : m.embedding.bias()) b = 0.05;
  const MatrixXd expect = dense_layer(relu(dense_layer(oracle::to_eigen(x), m.embedding)), m.classifier);
  for (ConvMode mode : {ConvMode::Deterministic, ConvMode::Stochastic}) {
    const auto got = oracle::to_eigen(forward(m, g, x, ForwardOptions{mode, {}}));
    EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Forward, SingleTapKernelIsScaledMlp) {
  const int n = 20;
  const Graph g = Graph::from_edge_list(oracle::random_edges(n, 0.2, 3), n);
  const FeatureMatrix x = oracle::random_features(n, 5, 4);
  for (KernelVariant variant : {KernelVariant::Global, KernelVariant::PerLayer, KernelVariant::DepthWise}) {
    const ModelConfig cfg = small_config(3, 1, variant);
    PathGCNModel m = PathGCNModel::create(5, 3, cfg);
    for (double& s : m.kernel.values()) s = 0.5 + s;
    for (auto& b : m.blocks)
      for (double& v : b.bias()) v = 0.1;

    // Fold the per-channel tap into the block weights: diag(s0) W.
    MatrixXd h = relu(dense_layer(oracle::to_eigen(x), m.embedding));
    for (int l = 0; l < cfg.layers; ++l) {
      DenseParam folded = m.blocks[l];
      const KernelSlice s = m.kernel.slice(l);
      for (std::size_t r = 0; r < folded.in_channels(); ++r)
        for (std::size_t c = 0; c < folded.out_channels(); ++c) folded.weights()(r, c) *= s.at(r, 0);
      h = relu(dense_layer(h, folded));
    }
    const MatrixXd expect = dense_layer(h, m.classifier);

    const auto paths = sample_layer_paths(g, cfg, cfg.layers, streams::kEvalPaths, 0);
    for (ConvMode mode : {ConvMode::Deterministic, ConvMode::Stochastic}) {
      const auto got = oracle::to_eigen(forward(m, g, x, ForwardOptions{mode, paths}));
      EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-10) << to_string(variant) << " " << to_string(mode);
    }
  }
}

TEST(Forward, StochasticConvergesToDeterministic) {
  const int n = 50;
  const Graph g = Graph::from_edge_list(oracle::random_edges(n, 0.1, 5), n);
  const FeatureMatrix x = oracle::random_features(n, 4, 6);
  ModelConfig cfg = small_config(2, 4, KernelVariant::DepthWise);
  cfg.paths = 10000;
  const PathGCNModel m = PathGCNModel::create(4, 3, cfg);
  const auto paths = sample_layer_paths(g, cfg, 2, streams::kEvalPaths, 0);
  const auto sto = forward(m, g, x, ForwardOptions{ConvMode::Stochastic, paths});
  const auto det = deterministic_logits(m, g, x);
  double sq = 0;
  for (std::size_t i = 0; i < det.size(); ++i) sq += std::pow(sto.storage()[i] - det.storage()[i], 2);
  EXPECT_LT(std::sqrt(sq / static_cast<double>(det.size())), 1e-2);
}

TEST(Forward, DeltaInitKeepsScaleThroughDepth) {
  const int n = 80;
  const Graph g = Graph::from_edge_list(oracle::random_edges(n, 0.05, 8), n);
  const FeatureMatrix x = oracle::random_features(n, 6, 9);
  ModelConfig cfg;
  cfg.layers = 16;
  cfg.hidden = 32;
  cfg.seed = 3;
  auto ratio = [&](InitScheme init) {
    cfg.init = init;
    const auto t = forward_trace(PathGCNModel::create(6, 3, cfg), g, x, ForwardOptions{});
    return max_abs(t.block_pre.back()) / max_abs(t.embedding_pre);
  };
  EXPECT_LT(ratio(InitScheme::Spread), 1e-5);
  const double delta = ratio(InitScheme::Delta);
  EXPECT_GT(delta, 0.05);
  EXPECT_LT(delta, 20.0);
}

TEST(Forward, Errors) {
  const Graph g = Graph::from_edge_list(oracle::random_edges(6, 0.5, 1), 6);
  const ModelConfig cfg = small_config(2, 2, KernelVariant::Global);
  const PathGCNModel m = PathGCNModel::create(3, 2, cfg);
  EXPECT_THROW(forward(m, g, FeatureMatrix(5, 3), {}), std::invalid_argument);
  EXPECT_THROW(forward(m, g, FeatureMatrix(6, 3), ForwardOptions{ConvMode::Stochastic, {}}), std::invalid_argument);

  PathGCNModel bad = m;
  bad.blocks[1].weights()(0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward(bad, g, oracle::random_features(6, 3, 2), {});
    FAIL() << "expected a non-finite activation error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

double model_loss(const PathGCNModel& m, const Graph& g, const FeatureMatrix& x, std::span<const int> labels,
                  std::span<const std::int32_t> mask, ConvMode mode, std::span<const PathSet> paths) {
  return masked_cross_entropy(forward(m, g, x, ForwardOptions{mode, paths}), labels, mask).loss;
}

TEST(Backward, EndToEndFiniteDifferences) {
  const int n = 12;
  const auto edges = oracle::random_edges(n, 0.3, 8);
  const Graph g = Graph::from_edge_list(edges, n);
  const FeatureMatrix x = oracle::random_features(n, 5, 9);
  std::vector<int> labels(n);
  for (int v = 0; v < n; ++v) labels[v] = v % 3;
  const std::vector<std::int32_t> mask{0, 2, 3, 5, 7, 8, 11};
  for (KernelVariant variant : {KernelVariant::Global, KernelVariant::PerLayer, KernelVariant::DepthWise}) {
    ModelConfig cfg = small_config(2, 3, variant);
    cfg.hidden = 4;
    cfg.paths = 2;
    PathGCNModel m = PathGCNModel::create(5, 3, cfg);
    for (auto* p : {&m.embedding, &m.blocks[0], &m.blocks[1], &m.classifier})
      for (double& b : p->bias()) b = 0.05;
    const auto paths = sample_layer_paths(g, cfg, 2, streams::kTrainPaths, 0);
    for (ConvMode mode : {ConvMode::Stochastic, ConvMode::Deterministic}) {
      const ForwardTrace t = forward_trace(m, g, x, ForwardOptions{mode, paths});
      const auto loss = masked_cross_entropy(t.logits, labels, mask);
      const ModelGrads grads = backward(m, g, t, paths, loss.grad_logits);
      for (const ParamRef& ref : param_refs(m, grads)) {
        std::vector<double> numeric(ref.values.size());
        for (std::size_t i = 0; i < ref.values.size(); ++i) {
          const double o = ref.values[i], h = 1e-6;
          ref.values[i] = o + h;
          const double up = model_loss(m, g, x, labels, mask, mode, paths);
          ref.values[i] = o - h;
          const double dn = model_loss(m, g, x, labels, mask, mode, paths);
          ref.values[i] = o;
          numeric[i] = (up - dn) / (2 * h);
        }
        double num = 0, den = 0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
          num += std::pow(ref.grads[i] - numeric[i], 2);
          den += numeric[i] * numeric[i];
        }
        if (den == 0) {
          EXPECT_EQ(num, 0.0) << ref.name;
          continue;
        }
        EXPECT_LT(std::sqrt(num / den), 1e-4) << ref.name << " " << to_string(variant) << " " << to_string(mode);
      }
    }
  }
}

TEST(Forward, PermutationEquivariance) {
  const int n = 25;
  const auto edges = oracle::random_edges(n, 0.15, 10);
  const FeatureMatrix x = oracle::random_features(n, 4, 11);
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(12);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Edge> pedges;
  for (auto [u, v] : edges) pedges.emplace_back(perm[u], perm[v]);
  FeatureMatrix px(n, 4);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < 4; ++c) px(perm[v], c) = x(v, c);

  const PathGCNModel m = PathGCNModel::create(4, 3, small_config(3, 5, KernelVariant::DepthWise));
  const auto a = deterministic_logits(m, Graph::from_edge_list(edges, n), x);
  const auto b = deterministic_logits(m, Graph::from_edge_list(pedges, n), px);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(b(perm[v], c), a(v, c), 1e-12);
}

struct SynthRun {
  GraphBundle bundle;
  ModelConfig cfg;
};

SynthRun two_cliques_run() {
  SynthParams sp;
  sp.n = 10;
  sp.seed = 3;
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.path_length = 3;
  cfg.paths = 5;
  cfg.dropout = 0.5;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 1;
  return {synth_graph(SynthKind::TwoCliques, sp), cfg};
}

TEST(Train, TwoCliquesIsSeparable) {
  auto [b, cfg] = two_cliques_run();
  const auto model = PathGCNModel::create(b.features.cols(), 2, cfg);
  const auto report = train(model, b.graph, b.features, b.labels, b.splits[0], cfg);
  EXPECT_LE(report.epochs.size(), 200u);
  const auto test = evaluate(report.best_model, b.graph, b.features, b.labels, b.splits[0].test,
                             ConvMode::Deterministic, 1, cfg);
  EXPECT_EQ(test.mean, 1.0);
}

TEST(Train, SeedDeterminism) {
  auto [b, cfg] = two_cliques_run();
  cfg.max_epochs = 40;
  auto run = [&] {
    return train(PathGCNModel::create(b.features.cols(), 2, cfg), b.graph, b.features, b.labels, b.splits[0], cfg);
  };
  const auto r1 = run(), r2 = run();
  ASSERT_EQ(r1.epochs.size(), r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    EXPECT_EQ(r1.epochs[i].loss, r2.epochs[i].loss);
    EXPECT_EQ(r1.epochs[i].val_loss, r2.epochs[i].val_loss);
  }
  EXPECT_EQ(r1.best_epoch, r2.best_epoch);
  EXPECT_EQ(r1.best_model, r2.best_model);
}

TEST(Train, ZeroPatienceStopsAtFirstNonImprovingEpoch) {
  SynthParams sp;
  sp.n = 60;
  sp.edge_probability = 0.1;
  sp.num_classes = 3;
  sp.feature_noise = 1.5;
  sp.seed = 4;
  const GraphBundle b = synth_graph(SynthKind::ErdosRenyi, sp);
  ModelConfig cfg = small_config(2, 3, KernelVariant::DepthWise);
  cfg.patience = 0;
  cfg.max_epochs = 500;
  const auto report = train(PathGCNModel::create(b.features.cols(), 3, cfg), b.graph, b.features, b.labels,
                            b.splits[0], cfg);
  ASSERT_FALSE(report.epochs.empty());
  double best_acc = -1, best_loss = 0;
  std::size_t stop = report.epochs.size();
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const auto& e = report.epochs[i];
    const bool improved = i == 0 || e.val_accuracy > best_acc || (e.val_accuracy == best_acc && e.val_loss < best_loss);
    if (!improved) {
      stop = i + 1;
      break;
    }
    best_acc = e.val_accuracy;
    best_loss = e.val_loss;
  }
  EXPECT_EQ(report.epochs.size(), stop);
  EXPECT_LT(report.epochs.size(), 500u);
  EXPECT_EQ(report.best_epoch, static_cast<int>(stop) - 2);
}

TEST(Train, RejectsBadSplits) {
  auto [b, cfg] = two_cliques_run();
  const auto model = PathGCNModel::create(b.features.cols(), 2, cfg);
  Split overlap = b.splits[0];
  overlap.val.push_back(overlap.train.front());
  EXPECT_THROW(train(model, b.graph, b.features, b.labels, overlap, cfg), std::invalid_argument);
  Split outside = b.splits[0];
  outside.test.push_back(999);
  EXPECT_THROW(train(model, b.graph, b.features, b.labels, outside, cfg), std::out_of_range);
}

TEST(Evaluate, DeterministicIsPureAndStochasticReportsSpread) {
  auto [b, cfg] = two_cliques_run();
  const auto model = PathGCNModel::create(b.features.cols(), 2, cfg);
  std::vector<std::int32_t> all(b.labels.size());
  std::iota(all.begin(), all.end(), 0);
  const auto d1 = evaluate(model, b.graph, b.features, b.labels, all, ConvMode::Deterministic, 1, cfg);
  const auto d2 = evaluate(model, b.graph, b.features, b.labels, all, ConvMode::Deterministic, 1, cfg);
  EXPECT_EQ(d1.mean, d2.mean);
  EXPECT_EQ(d1.stddev, 0.0);
  const auto s = evaluate(model, b.graph, b.features, b.labels, all, ConvMode::Stochastic, 10, cfg);
  EXPECT_EQ(s.runs.size(), 10u);
  EXPECT_GE(s.stddev, 0.0);
  EXPECT_THROW(evaluate(model, b.graph, b.features, b.labels, {}, ConvMode::Deterministic, 1, cfg),
               std::invalid_argument);
}

TEST(Benchmark, CostScaling) {
  SynthParams sp;
  sp.n = 3000;
  sp.edge_probability = 0.002;
  sp.num_classes = 4;
  sp.seed = 9;
  const GraphBundle b = synth_graph(SynthKind::ErdosRenyi, sp);
  ModelConfig cfg;
  cfg.hidden = 16;
  auto run = [&](int k, int p) {
    ModelConfig c = cfg;
    c.path_length = k;
    c.paths = p;
    return benchmark(PathGCNModel::create(b.features.cols(), 4, c), b.graph, b.features, b.labels,
                     b.splits[0].train, c, 21);
  };
  const auto p5 = run(5, 5), p10 = run(5, 10), k2 = run(2, 5);
  const double ratio = p10.path_sampling_ms / p5.path_sampling_ms;
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 3.0);
  EXPECT_LT(k2.train_step_ms, p5.train_step_ms);
  EXPECT_GT(p5.inference_deterministic_ms, 0.0);
  EXPECT_GT(p5.inference_stochastic_ms, 0.0);
  EXPECT_EQ(p5.repetitions, 21);
}

}  // namespace
}  // namespace pathgcn
