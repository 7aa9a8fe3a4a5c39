#include "pathgcn/bundle.hpp"
#include "pathgcn/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace pathgcn {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("pathgcn_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void overwrite(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

BundleError expect_bundle_error(const fs::path& dir) {
  try {
    load_bundle(dir);
  } catch (const BundleError& e) {
    return e;
  }
  ADD_FAILURE() << "load_bundle succeeded unexpectedly";
  return BundleError("none", "");
}

TEST(Bundle, RoundTrip) {
  TempDir tmp;
  SynthParams sp;
  sp.n = 40;
  sp.edge_probability = 0.1;
  sp.num_classes = 3;
  sp.seed = 7;
  GraphBundle b = synth_graph(SynthKind::ErdosRenyi, sp);
  b.features(0, 0) = 0.1 + 0.2;
  b.features(1, 1) = -1e-300;
  save_bundle(b, tmp.path());
  EXPECT_EQ(load_bundle(tmp.path()), b);

  b.splits.push_back(b.splits.front());
  std::swap(b.splits[1].val, b.splits[1].test);
  save_bundle(b, tmp.path() / "multi");
  EXPECT_EQ(load_bundle(tmp.path() / "multi"), b);
}

TEST(Bundle, SaveIsByteStable) {
  TempDir tmp;
  const GraphBundle b = synth_graph(SynthKind::Karate, {});
  save_bundle(b, tmp.path() / "a");
  save_bundle(load_bundle(tmp.path() / "a"), tmp.path() / "b");
  for (const char* f : {"graph.edges", "features.csv", "labels.csv", "splits.json", "meta.json"})
    EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
}

TEST(Bundle, ShortLabelsFileIsCountMismatch) {
  TempDir tmp;
  const GraphBundle b = synth_graph(SynthKind::Star, {.n = 5});
  save_bundle(b, tmp.path());
  overwrite(tmp.path() / "labels.csv", "0\n1\n1\n1\n");
  const auto e = expect_bundle_error(tmp.path());
  EXPECT_EQ(e.kind(), "count_mismatch");
  EXPECT_NE(std::string(e.what()).find("labels.csv"), std::string::npos) << e.what();
}

TEST(Bundle, MalformedLineReportsLineNumber) {
  TempDir tmp;
  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  overwrite(tmp.path() / "graph.edges", "0 1\n1 2\n# comment\n2 x\n");
  const auto e = expect_bundle_error(tmp.path());
  EXPECT_EQ(e.kind(), "malformed");
  EXPECT_NE(std::string(e.what()).find("graph.edges:4"), std::string::npos) << e.what();

  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  std::string feats = slurp(tmp.path() / "features.csv");
  feats.insert(feats.find('\n') + 1, "1,2,abc,4\n");
  overwrite(tmp.path() / "features.csv", feats);
  const auto f = expect_bundle_error(tmp.path());
  EXPECT_EQ(f.kind(), "malformed");
  EXPECT_NE(std::string(f.what()).find("features.csv:2"), std::string::npos) << f.what();
}

TEST(Bundle, OtherErrors) {
  TempDir tmp;
  EXPECT_EQ(expect_bundle_error(tmp.path() / "absent").kind(), "missing_file");
  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  fs::remove(tmp.path() / "features.csv");
  EXPECT_EQ(expect_bundle_error(tmp.path()).kind(), "missing_file");

  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  overwrite(tmp.path() / "graph.edges", "0 9\n");
  EXPECT_EQ(expect_bundle_error(tmp.path()).kind(), "invalid");

  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  overwrite(tmp.path() / "splits.json", R"({"train":[0,1],"val":[1],"test":[2]})");
  EXPECT_EQ(expect_bundle_error(tmp.path()).kind(), "invalid");

  save_bundle(synth_graph(SynthKind::Path, {.n = 6}), tmp.path());
  overwrite(tmp.path() / "meta.json", "{\"n\": 6,");
  EXPECT_EQ(expect_bundle_error(tmp.path()).kind(), "malformed");
}

TEST(Synth, StarDegrees) {
  const GraphBundle b = synth_graph(SynthKind::Star, {.n = 5});
  std::vector<NodeId> deg;
  for (NodeId v = 0; v < 5; ++v) deg.push_back(b.graph.degree(v));
  EXPECT_EQ(deg, (std::vector<NodeId>{4, 1, 1, 1, 1}));
}

TEST(Synth, ErdosRenyiReproducible) {
  SynthParams sp{.n = 200, .edge_probability = 0.025, .num_classes = 3, .seed = 11};
  EXPECT_EQ(synth_graph(SynthKind::ErdosRenyi, sp), synth_graph(SynthKind::ErdosRenyi, sp));
  SynthParams other = sp;
  other.seed = 12;
  EXPECT_NE(synth_graph(SynthKind::ErdosRenyi, sp).graph, synth_graph(SynthKind::ErdosRenyi, other).graph);
  const auto edges = synth_graph(SynthKind::ErdosRenyi, sp).graph.num_edges();
  EXPECT_NEAR(static_cast<double>(edges), 0.025 * 200 * 199 / 2, 5 * std::sqrt(0.025 * 19900));
}

TEST(Synth, TwoCliquesHaveOneCrossEdge) {
  const GraphBundle b = synth_graph(SynthKind::TwoCliques, {.n = 10});
  int cross = 0;
  for (auto [u, v] : b.graph.edge_list()) cross += (b.labels[u] != b.labels[v]) ? 1 : 0;
  EXPECT_EQ(cross, 1);
  EXPECT_EQ(b.graph.num_edges(), 2u * 45u + 1u);
  EXPECT_EQ(b.meta.n, 20);
  b.splits[0].validate(20);
  EXPECT_FALSE(b.splits[0].test.empty());
}

TEST(Synth, KarateShape) {
  const GraphBundle b = synth_graph(SynthKind::Karate, {});
  EXPECT_EQ(b.graph.num_nodes(), 34);
  EXPECT_EQ(b.graph.num_edges(), 78u);
}

TEST(Synth, InvalidParams) {
  EXPECT_THROW(synth_graph(SynthKind::Star, {.n = 1}), std::invalid_argument);
  EXPECT_THROW(synth_graph(SynthKind::ErdosRenyi, {.n = 5, .edge_probability = 1.5}), std::invalid_argument);
  EXPECT_THROW(parse_synth_kind("grid"), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndOverrides) {
  ModelConfig c;
  c.layers = 16;
  c.variant = KernelVariant::PerLayer;
  c.train_mode = ConvMode::Deterministic;
  c.seed = 0xFFFFFFFFFFFFull;
  c.lr_gcn = 0.1 + 0.2;
  c.init = InitScheme::Delta;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  const auto partial = config_from_json(nlohmann::json{{"hidden", 32}}, c);
  EXPECT_EQ(partial.hidden, 32);
  EXPECT_EQ(partial.layers, 16);
  EXPECT_THROW(config_from_json(nlohmann::json{{"hiden", 32}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"dropout", 1.0}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"variant", "wide"}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"init", "zero"}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"layers", "two"}}), std::invalid_argument);
}

TEST(Config, DefaultsMatchCoraSemiSupervisedSetting) {
  const ModelConfig c;
  EXPECT_EQ(c.hidden, 64);
  EXPECT_EQ(c.path_length, 5);
  EXPECT_EQ(c.paths, 5);
  EXPECT_EQ(c.dropout, 0.6);
  EXPECT_EQ(c.lr_gcn, 1e-3);
  EXPECT_EQ(c.wd_gcn, 2e-5);
  EXPECT_EQ(c.lr_oc, 1e-2);
  EXPECT_EQ(c.wd_oc, 1e-5);
  EXPECT_EQ(c.max_epochs, 1500);
  EXPECT_EQ(c.patience, 100);
  EXPECT_EQ(c.init, InitScheme::Spread);
}

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
  TempDir tmp;
  for (KernelVariant variant : {KernelVariant::Global, KernelVariant::PerLayer, KernelVariant::DepthWise}) {
    ModelConfig cfg;
    cfg.layers = 3;
    cfg.hidden = 8;
    cfg.variant = variant;
    cfg.seed = 5;
    const PathGCNModel m = PathGCNModel::create(6, 4, cfg);
    const fs::path p = tmp.path() / (std::string(to_string(variant)) + ".json");
    save_checkpoint(p, m, cfg);
    const Checkpoint ck = load_checkpoint(p);
    EXPECT_EQ(ck.model, m);
    EXPECT_EQ(ck.config, cfg);
    const fs::path q = tmp.path() / "again.json";
    save_checkpoint(q, ck.model, ck.config);
    EXPECT_EQ(slurp(p), slurp(q));
  }
}

TEST(Checkpoint, RejectsCorruption) {
  TempDir tmp;
  ModelConfig cfg;
  cfg.hidden = 4;
  const PathGCNModel m = PathGCNModel::create(3, 2, cfg);
  auto j = checkpoint_to_json(m, cfg);
  j["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(j), std::runtime_error);
  j = checkpoint_to_json(m, cfg);
  j["kernel"]["weights"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), std::runtime_error);
  j = checkpoint_to_json(m, cfg);
  j["dense"][1]["bias"].push_back(1.0);
  EXPECT_THROW(checkpoint_from_json(j), std::runtime_error);
  overwrite(tmp.path() / "bad.json", "{not json");
  EXPECT_THROW(load_checkpoint(tmp.path() / "bad.json"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(tmp.path() / "missing.json"), std::runtime_error);
}

TEST(Reports, CsvFormats) {
  TrainingReport r;
  r.epochs = {{0, 0.5, 0.25, 1.5}, {1, 0.125, 0.75, 1.0}};
  EXPECT_EQ(training_csv(r), "epoch,loss,val_acc,val_loss\n0,0.5,0.25,1.5\n1,0.125,0.75,1\n");
  EXPECT_EQ(effective_kernel_csv({{3, 0.5}, {1, -2.0}}), "node_id,weight\n1,-2\n3,0.5\n");
}

}  // namespace
}  // namespace pathgcn
