#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pathgcn/pathgcn.hpp"

namespace fs = std::filesystem;
using namespace pathgcn;

namespace {

class CliError : public std::runtime_error {
 public:
  CliError(std::string kind, const std::string& msg) : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ConfigFlags {
  std::string config_path;
  std::optional<int> layers, hidden, path_length, paths, max_epochs, patience, eval_repeats;
  std::optional<double> dropout, lr_gcn, wd_gcn, lr_oc, wd_oc;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant, train_mode, inference_mode, init;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "model config JSON")->check(CLI::ExistingFile);
    app->add_option("--layers", layers, "pathGCN blocks (L)");
    app->add_option("--hidden", hidden, "hidden channels (c)");
    app->add_option("--path-length", path_length, "path length (k)");
    app->add_option("--paths", paths, "paths per node (p)");
    app->add_option("--dropout", dropout, "dropout probability");
    app->add_option("--variant", variant, "global|per_layer|depthwise");
    app->add_option("--lr-gcn", lr_gcn);
    app->add_option("--wd-gcn", wd_gcn);
    app->add_option("--lr-oc", lr_oc);
    app->add_option("--wd-oc", wd_oc);
    app->add_option("--max-epochs", max_epochs);
    app->add_option("--patience", patience);
    app->add_option("--seed", seed);
    app->add_option("--train-mode", train_mode, "stochastic|deterministic");
    app->add_option("--inference-mode", inference_mode, "stochastic|deterministic");
    app->add_option("--eval-repeats", eval_repeats);
    app->add_option("--init", init, "spread|delta");
  }

  ModelConfig resolve(ModelConfig base = {}) const {
    ModelConfig c = config_path.empty() ? base : load_config(config_path, base);
    auto set = [](const auto& opt, auto& field) {
      if (opt) field = *opt;
    };
    set(layers, c.layers);
    set(hidden, c.hidden);
    set(path_length, c.path_length);
    set(paths, c.paths);
    set(dropout, c.dropout);
    set(lr_gcn, c.lr_gcn);
    set(wd_gcn, c.wd_gcn);
    set(lr_oc, c.lr_oc);
    set(wd_oc, c.wd_oc);
    set(max_epochs, c.max_epochs);
    set(patience, c.patience);
    set(seed, c.seed);
    set(eval_repeats, c.eval_repeats);
    if (variant) c.variant = parse_kernel_variant(*variant);
    if (train_mode) c.train_mode = parse_conv_mode(*train_mode);
    if (inference_mode) c.inference_mode = parse_conv_mode(*inference_mode);
    if (init) c.init = parse_init_scheme(*init);
    c.validate();
    return c;
  }
};

const Split& pick_split(const GraphBundle& b, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= b.splits.size())
    throw CliError("invalid_argument", "split " + std::to_string(index) + " out of range (bundle has " +
                                           std::to_string(b.splits.size()) + ")");
  return b.splits[static_cast<std::size_t>(index)];
}

std::span<const std::int32_t> pick_nodes(const Split& s, const std::string& which) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw CliError("invalid_argument", "unknown node set '" + which + "' (train|val|test)");
}

void require_model_fits(const PathGCNModel& m, const GraphBundle& b) {
  if (m.embedding.in_channels() != b.features.cols() ||
      m.classifier.out_channels() != static_cast<std::size_t>(b.meta.num_classes))
    throw CliError("invalid_argument", "checkpoint shape does not match bundle (features " +
                                           std::to_string(b.features.cols()) + ", classes " +
                                           std::to_string(b.meta.num_classes) + ")");
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string bundle;
  std::string out = "run";
  int split = 0;
  bool all_splits = false;
  bool quiet = false;
};

nlohmann::json train_one(const GraphBundle& b, const ModelConfig& cfg, int split_index, const fs::path& out,
                         bool quiet) {
  const Split& split = pick_split(b, split_index);
  const auto start = std::chrono::steady_clock::now();
  const PathGCNModel init = PathGCNModel::create(b.features.cols(), static_cast<std::size_t>(b.meta.num_classes), cfg);
  const TrainingReport report = train(init, b.graph, b.features, b.labels, split, cfg, [&](const EpochRecord& e) {
    if (!quiet && e.epoch % 50 == 0)
      std::cerr << "epoch " << e.epoch << " loss " << e.loss << " val_acc " << e.val_accuracy << "\n";
  });
  const auto trained = std::chrono::steady_clock::now();
  const AccuracyStats test = evaluate(report.best_model, b.graph, b.features, b.labels, split.test,
                                      cfg.inference_mode, cfg.eval_repeats, cfg);
  const auto done = std::chrono::steady_clock::now();

  const nlohmann::json summary = training_summary(report, cfg, test, split_index);
  save_checkpoint(out / "checkpoint.json", report.best_model, cfg);
  write_text(out / "training.csv", training_csv(report));
  write_text(out / "summary.json", dump(summary));
  const auto ms = [](auto a, auto b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
  write_text(out / "timing.json", dump({{"train_ms", ms(start, trained)},
                                        {"eval_ms", ms(trained, done)},
                                        {"epochs_run", report.epochs.size()}}));
  return summary;
}

int run_train(const TrainArgs& a, const ModelConfig& cfg) {
  const GraphBundle b = load_bundle(a.bundle);
  const fs::path out(a.out);
  if (!a.all_splits) {
    std::cout << dump(train_one(b, cfg, a.split, out, a.quiet));
    return 0;
  }
  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> acc;
  for (std::size_t i = 0; i < b.splits.size(); ++i) {
    const auto s = train_one(b, cfg, static_cast<int>(i), out / ("split" + std::to_string(i)), a.quiet);
    acc.push_back(s.at("test_accuracy").get<double>());
    runs.push_back(s);
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  double sq = 0;
  for (double v : acc) sq += (v - mean) * (v - mean);
  const double sd = acc.size() > 1 ? std::sqrt(sq / static_cast<double>(acc.size() - 1)) : 0.0;
  const nlohmann::json agg{{"splits", acc.size()}, {"test_accuracy", mean}, {"test_accuracy_std", sd}, {"runs", runs}};
  write_text(out / "summary.json", dump(agg));
  std::cout << dump(agg);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string bundle, checkpoint, mode, nodes = "test", out;
  std::optional<int> repeats;
  int split = 0;
};

int run_eval(const EvalArgs& a) {
  const GraphBundle b = load_bundle(a.bundle);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  require_model_fits(ck.model, b);
  const ConvMode mode = a.mode.empty() ? ck.config.inference_mode : parse_conv_mode(a.mode);
  const int repeats = a.repeats.value_or(ck.config.eval_repeats);
  const Split& split = pick_split(b, a.split);
  const auto stats = evaluate(ck.model, b.graph, b.features, b.labels, pick_nodes(split, a.nodes), mode, repeats,
                              ck.config);
  const nlohmann::json j{{"mode", to_string(mode)},
                         {"nodes", a.nodes},
                         {"split", a.split},
                         {"repeats", mode == ConvMode::Deterministic ? 1 : repeats},
                         {"accuracy", stats.mean},
                         {"accuracy_std", stats.stddev},
                         {"runs", stats.runs}};
  if (!a.out.empty()) write_text(a.out, dump(j));
  std::cout << dump(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string graph = "erdos_renyi";
  int n = 200;
  double edge_probability = 0.025;
  std::uint64_t seed = 0;
};

int run_verify(const VerifyArgs& a) {
  SynthParams sp;
  sp.n = a.n;
  sp.edge_probability = a.edge_probability;
  sp.seed = a.seed;
  const GraphBundle b = synth_graph(parse_synth_kind(a.graph), sp);
  const auto conv = verify::monte_carlo_convergence(b.graph, 5, a.seed);
  std::vector<verify::CheckResult> results;
  {
    const bool ok = conv.slope >= -0.65 && conv.slope <= -0.35 && conv.errors.back().second < 10.0 * conv.predicted_last;
    std::ostringstream d;
    d << "slope=" << conv.slope;
    for (auto [p, e] : conv.errors) d << " err(p=" << p << ")=" << e;
    results.push_back({"monte_carlo_convergence", ok, d.str()});
  }
  results.push_back(verify::check_exhaustive_equivalence(a.seed));
  results.push_back(verify::check_adjoint(b.graph, a.seed));
  results.push_back(verify::check_path_conv_gradients(a.seed));
  results.push_back(verify::check_layer_gradients(a.seed));
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " " << r.detail << "\n";
    all = all && r.passed;
  }
  std::cout << "slope " << conv.slope << "\n";
  if (!all) throw CliError("verify_failed", "one or more checks failed");
  return 0;
}

// ---------------------------------------------------------------------------

struct KernelDumpArgs {
  std::string bundle, checkpoint, out;
  std::vector<NodeId> nodes;
  std::vector<int> layers;
  std::vector<int> channels{0};
  std::optional<int> paths;
};

int run_kernel_dump(const KernelDumpArgs& a) {
  const GraphBundle b = load_bundle(a.bundle);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  require_model_fits(ck.model, b);
  ModelConfig cfg = ck.config;
  if (a.paths) cfg.paths = *a.paths;
  cfg.validate();
  const int L = ck.model.num_layers();
  if (L == 0) throw CliError("invalid_argument", "model has no pathGCN blocks");
  std::vector<int> layers = a.layers;
  if (layers.empty()) {
    layers.resize(static_cast<std::size_t>(L));
    std::iota(layers.begin(), layers.end(), 0);
  }
  for (int l : layers)
    if (l < 0 || l >= L) throw CliError("invalid_argument", "layer " + std::to_string(l) + " out of range");
  for (int ch : a.channels)
    if (ch < 0 || ch >= cfg.hidden) throw CliError("invalid_argument", "channel " + std::to_string(ch) + " out of range");
  for (NodeId v : a.nodes)
    if (v < 0 || v >= b.graph.num_nodes()) throw CliError("invalid_argument", "node " + std::to_string(v) + " out of range");

  const auto paths = sample_layer_paths(b.graph, cfg, L, streams::kEvalPaths, 0);
  std::string csv = "origin,layer,channel,node_id,stochastic,deterministic\n";
  for (NodeId origin : a.nodes) {
    for (int l : layers) {
      const KernelSlice slice = ck.model.kernel.slice(l);
      for (int ch : a.channels) {
        std::vector<double> s(static_cast<std::size_t>(slice.length));
        for (int i = 0; i < slice.length; ++i) s[i] = slice.at(static_cast<std::size_t>(ch), i);
        const SparseWeights sto = effective_kernel_stochastic(paths[l], s, origin);
        const SparseWeights det = effective_kernel_deterministic(b.graph, s, origin);
        std::map<NodeId, std::pair<double, double>> rows;
        for (auto [v, w] : sto) rows[v].first = w;
        for (auto [v, w] : det) rows[v].second = w;
        for (auto [v, w] : rows)
          csv += std::to_string(origin) + "," + std::to_string(l) + "," + std::to_string(ch) + "," + std::to_string(v) +
                 "," + detail::format_double(w.first) + "," + detail::format_double(w.second) + "\n";
      }
    }
  }
  if (a.out.empty()) std::cout << csv;
  else write_text(a.out, csv);
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string bundle, checkpoint, out;
  int reps = 20;
  int split = 0;
};

int run_bench(const BenchArgs& a, const ModelConfig& flags_cfg) {
  const GraphBundle b = load_bundle(a.bundle);
  ModelConfig cfg = flags_cfg;
  PathGCNModel model;
  if (!a.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    require_model_fits(ck.model, b);
    model = std::move(ck.model);
    cfg = ck.config;
  } else {
    model = PathGCNModel::create(b.features.cols(), static_cast<std::size_t>(b.meta.num_classes), cfg);
  }
  const auto rep = benchmark(model, b.graph, b.features, b.labels, pick_split(b, a.split).train, cfg, a.reps);
  nlohmann::json j = bench_to_json(rep);
  j["bundle"] = b.meta.name;
  j["layers"] = cfg.layers;
  j["path_length"] = cfg.path_length;
  j["paths"] = cfg.paths;
  if (!a.out.empty()) write_text(a.out, dump(j));
  std::cout << dump(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "two_cliques";
  std::string out;
  SynthParams params;
};

int run_synth(const SynthArgs& a) {
  const GraphBundle b = synth_graph(parse_synth_kind(a.kind), a.params);
  save_bundle(b, a.out);
  std::cout << dump({{"name", b.meta.name},
                     {"n", b.meta.n},
                     {"c", b.meta.c},
                     {"num_classes", b.meta.num_classes},
                     {"edges", b.graph.num_edges()},
                     {"out", a.out}});
  return 0;
}

int fail(const std::string& kind, const std::string& msg) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "pathgcn: error: " << kind << ": " << line << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathGCN: graph convolutions with learnt spatial operators along random paths"};
  app.require_subcommand(1);

  ConfigFlags train_cfg, bench_cfg;
  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model on a bundle");
  train_cmd->add_option("--bundle", train_args.bundle, "graph bundle directory")->required();
  train_cmd->add_option("--out", train_args.out, "output directory");
  train_cmd->add_option("--split", train_args.split, "split index");
  train_cmd->add_flag("--all-splits", train_args.all_splits, "train on every split and report the mean");
  train_cmd->add_flag("--quiet", train_args.quiet, "no per-epoch progress on stderr");
  train_cfg.attach(train_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--bundle", eval_args.bundle)->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--mode", eval_args.mode, "stochastic|deterministic (default: checkpoint config)");
  eval_cmd->add_option("--repeats", eval_args.repeats, "stochastic passes");
  eval_cmd->add_option("--split", eval_args.split);
  eval_cmd->add_option("--nodes", eval_args.nodes, "train|val|test");
  eval_cmd->add_option("--out", eval_args.out, "also write the JSON result here");

  VerifyArgs verify_args;
  auto* verify_cmd = app.add_subcommand("verify", "run the numerical self-checks");
  verify_cmd->add_option("--graph", verify_args.graph, "synthetic graph kind");
  verify_cmd->add_option("--n", verify_args.n, "node count");
  verify_cmd->add_option("--edge-prob", verify_args.edge_probability, "edge probability (erdos_renyi)");
  verify_cmd->add_option("--seed", verify_args.seed);

  KernelDumpArgs kd_args;
  auto* kd_cmd = app.add_subcommand("kernel-dump", "effective kernels of a trained model as CSV");
  kd_cmd->add_option("--bundle", kd_args.bundle)->required();
  kd_cmd->add_option("--checkpoint", kd_args.checkpoint)->required();
  kd_cmd->add_option("--nodes", kd_args.nodes, "origin nodes")->required()->delimiter(',');
  kd_cmd->add_option("--layers", kd_args.layers, "layers (default: all)")->delimiter(',');
  kd_cmd->add_option("--channels", kd_args.channels, "channels (default: 0)")->delimiter(',');
  kd_cmd->add_option("--paths", kd_args.paths, "paths per node for the stochastic column");
  kd_cmd->add_option("--out", kd_args.out, "CSV path (default: stdout)");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "time path sampling, training steps and inference");
  bench_cmd->add_option("--bundle", bench_args.bundle)->required();
  bench_cmd->add_option("--checkpoint", bench_args.checkpoint, "benchmark this model instead of a fresh one");
  bench_cmd->add_option("--reps", bench_args.reps, "repetitions per phase")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--split", bench_args.split);
  bench_cmd->add_option("--out", bench_args.out, "also write the JSON result here");
  bench_cfg.attach(bench_cmd);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic bundle");
  synth_cmd->add_option("--kind", synth_args.kind, "erdos_renyi|two_cliques|star|path|karate");
  synth_cmd->add_option("--n", synth_args.params.n, "nodes (clique size for two_cliques)");
  synth_cmd->add_option("--edge-prob", synth_args.params.edge_probability);
  synth_cmd->add_option("--classes", synth_args.params.num_classes);
  synth_cmd->add_option("--noise", synth_args.params.feature_noise, "feature noise amplitude");
  synth_cmd->add_option("--seed", synth_args.params.seed);
  synth_cmd->add_option("--out", synth_args.out, "bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*train_cmd) return run_train(train_args, train_cfg.resolve());
    if (*eval_cmd) return run_eval(eval_args);
    if (*verify_cmd) return run_verify(verify_args);
    if (*kd_cmd) return run_kernel_dump(kd_args);
    if (*bench_cmd) return run_bench(bench_args, bench_cfg.resolve());
    if (*synth_cmd) return run_synth(synth_args);
  } catch (const CliError& e) {
    return fail(e.kind(), e.what());
  } catch (const BundleError& e) {
    return fail(e.kind(), e.what());
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::out_of_range& e) {
    return fail("out_of_range", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}
