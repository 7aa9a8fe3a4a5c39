#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "pathgcn/bundle.hpp"
#include "pathgcn/model.hpp"

namespace pathgcn {

inline constexpr const char* kCheckpointFormat = "pathgcn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"hidden", c.hidden},
          {"path_length", c.path_length},
          {"paths", c.paths},
          {"dropout", c.dropout},
          {"variant", to_string(c.variant)},
          {"lr_gcn", c.lr_gcn},
          {"wd_gcn", c.wd_gcn},
          {"lr_oc", c.lr_oc},
          {"wd_oc", c.wd_oc},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"train_mode", to_string(c.train_mode)},
          {"inference_mode", to_string(c.inference_mode)},
          {"eval_repeats", c.eval_repeats},
          {"init", to_string(c.init)}};
}

/// Applies the keys present in `j` on top of `base`. Unknown keys are rejected.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::set<std::string> known = {"layers", "hidden", "path_length", "paths", "dropout", "variant",
                                              "lr_gcn", "wd_gcn", "lr_oc", "wd_oc", "max_epochs", "patience",
                                              "seed", "train_mode", "inference_mode", "eval_repeats", "init"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("layers", base.layers);
    get("hidden", base.hidden);
    get("path_length", base.path_length);
    get("paths", base.paths);
    get("dropout", base.dropout);
    get("lr_gcn", base.lr_gcn);
    get("wd_gcn", base.wd_gcn);
    get("lr_oc", base.lr_oc);
    get("wd_oc", base.wd_oc);
    get("max_epochs", base.max_epochs);
    get("patience", base.patience);
    get("seed", base.seed);
    get("eval_repeats", base.eval_repeats);
    if (j.contains("variant")) base.variant = parse_kernel_variant(j.at("variant").get<std::string>());
    if (j.contains("train_mode")) base.train_mode = parse_conv_mode(j.at("train_mode").get<std::string>());
    if (j.contains("inference_mode")) base.inference_mode = parse_conv_mode(j.at("inference_mode").get<std::string>());
    if (j.contains("init")) base.init = parse_init_scheme(j.at("init").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  base.validate();
  return base;
}

inline ModelConfig load_config(const std::filesystem::path& p, ModelConfig base = {}) {
  return config_from_json(detail::read_json(p), base);
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON document holding the config, every 1x1 convolution and
// the spatial kernel. Doubles are written in shortest round-trip form.

namespace detail {
inline nlohmann::json dense_to_json(const std::string& name, const DenseParam& p) {
  return {{"name", name},
          {"group", to_string(p.group())},
          {"rows", p.in_channels()},
          {"cols", p.out_channels()},
          {"weights", p.weights().storage()},
          {"bias", p.bias()}};
}

inline DenseParam dense_from_json(const nlohmann::json& j, const std::string& expected_name) {
  if (j.at("name").get<std::string>() != expected_name)
    throw std::runtime_error("checkpoint: expected tensor '" + expected_name + "'");
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  DenseParam p(rows, cols, parse_param_group(j.at("group").get<std::string>()));
  auto w = j.at("weights").get<std::vector<double>>();
  auto b = j.at("bias").get<std::vector<double>>();
  if (w.size() != rows * cols || b.size() != cols)
    throw std::runtime_error("checkpoint: tensor '" + expected_name + "' has inconsistent sizes");
  p.weights() = FeatureMatrix(rows, cols, std::move(w));
  p.bias() = std::move(b);
  return p;
}
}  // namespace detail

inline nlohmann::json checkpoint_to_json(const PathGCNModel& m, const ModelConfig& cfg) {
  nlohmann::json dense = nlohmann::json::array();
  dense.push_back(detail::dense_to_json("embedding", m.embedding));
  for (std::size_t l = 0; l < m.blocks.size(); ++l)
    dense.push_back(detail::dense_to_json("block" + std::to_string(l), m.blocks[l]));
  dense.push_back(detail::dense_to_json("classifier", m.classifier));
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", config_to_json(cfg)},
          {"dense", dense},
          {"kernel",
           {{"variant", to_string(m.kernel.variant())},
            {"layers", m.kernel.layers()},
            {"channels", m.kernel.channels()},
            {"length", m.kernel.length()},
            {"weights", m.kernel.values()}}}};
}

struct Checkpoint {
  PathGCNModel model;
  ModelConfig config;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw std::runtime_error("checkpoint: wrong format tag");
    if (j.at("version").get<int>() != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    const auto& dense = j.at("dense");
    const auto L = static_cast<std::size_t>(ck.config.layers);
    if (!dense.is_array() || dense.size() != L + 2) throw std::runtime_error("checkpoint: wrong tensor count");
    ck.model.embedding = detail::dense_from_json(dense[0], "embedding");
    for (std::size_t l = 0; l < L; ++l)
      ck.model.blocks.push_back(detail::dense_from_json(dense[l + 1], "block" + std::to_string(l)));
    ck.model.classifier = detail::dense_from_json(dense[L + 1], "classifier");
    const auto& k = j.at("kernel");
    SpatialKernel kernel(parse_kernel_variant(k.at("variant").get<std::string>()), k.at("layers").get<int>(),
                         k.at("channels").get<int>(), k.at("length").get<int>());
    auto w = k.at("weights").get<std::vector<double>>();
    if (w.size() != kernel.values().size()) throw std::runtime_error("checkpoint: kernel size mismatch");
    kernel.values() = std::move(w);
    ck.model.kernel = std::move(kernel);
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline void save_checkpoint(const std::filesystem::path& p, const PathGCNModel& m, const ModelConfig& cfg) {
  write_text(p, checkpoint_to_json(m, cfg).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open checkpoint " + p.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline std::string training_csv(const TrainingReport& r) {
  std::string out = "epoch,loss,val_acc,val_loss\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + detail::format_double(e.loss) + "," +
           detail::format_double(e.val_accuracy) + "," + detail::format_double(e.val_loss) + "\n";
  }
  return out;
}

inline nlohmann::json training_summary(const TrainingReport& r, const ModelConfig& cfg, const AccuracyStats& test,
                                       int split_index) {
  return {{"split", split_index},
          {"epochs_run", r.epochs.size()},
          {"best_epoch", r.best_epoch},
          {"best_val_accuracy", r.best_val_accuracy},
          {"best_val_loss", r.best_val_loss},
          {"inference_mode", to_string(cfg.inference_mode)},
          {"test_accuracy", test.mean},
          {"test_accuracy_std", test.stddev}};
}

inline nlohmann::json bench_to_json(const BenchReport& b) {
  return {{"repetitions", b.repetitions},
          {"path_sampling_ms", b.path_sampling_ms},
          {"train_step_ms", b.train_step_ms},
          {"inference_stochastic_ms", b.inference_stochastic_ms},
          {"inference_deterministic_ms", b.inference_deterministic_ms}};
}

inline std::string effective_kernel_csv(const SparseWeights& w) {
  std::string out = "node_id,weight\n";
  for (const auto& [v, x] : w) out += std::to_string(v) + "," + detail::format_double(x) + "\n";
  return out;
}

}  // namespace pathgcn
