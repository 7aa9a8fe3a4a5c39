#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgcn/graph.hpp"
#include "pathgcn/matrix.hpp"
#include "pathgcn/model.hpp"
#include "pathgcn/random.hpp"

namespace pathgcn {

/// Dataset on disk:
///   graph.edges   "u v" per line ('#' comments allowed)
///   features.csv  n rows of c comma-separated reals
///   labels.csv    n integers, one per line
///   splits.json   {"train":[...],"val":[...],"test":[...]} or an array of those
///   meta.json     {"n":..,"c":..,"num_classes":..,"name":".."}
struct BundleMeta {
  std::int32_t n = 0;
  std::int32_t c = 0;
  std::int32_t num_classes = 0;
  std::string name;

  friend bool operator==(const BundleMeta&, const BundleMeta&) = default;
};

struct GraphBundle {
  Graph graph;
  FeatureMatrix features;
  std::vector<int> labels;
  std::vector<Split> splits;
  BundleMeta meta;

  friend bool operator==(const GraphBundle&, const GraphBundle&) = default;
};

/// Bundle I/O failure. `kind` is one of missing_file, count_mismatch,
/// malformed, invalid.
class BundleError : public std::runtime_error {
 public:
  BundleError(std::string kind, const std::string& msg) : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  tok = trim(tok);
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw BundleError("missing_file", "cannot open " + p.string());
  return in;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  auto in = open_input(p);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw BundleError("malformed", p.string() + ": " + e.what());
  }
}

inline std::vector<std::int32_t> read_index_array(const nlohmann::json& j, const char* key,
                                                  const std::string& file) {
  if (!j.contains(key) || !j.at(key).is_array())
    throw BundleError("malformed", file + ": split object lacks array '" + key + "'");
  std::vector<std::int32_t> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number_integer()) throw BundleError("malformed", file + ": non-integer index in '" + key + "'");
    out.push_back(v.get<std::int32_t>());
  }
  return out;
}

inline nlohmann::json split_to_json(const Split& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

}  // namespace detail

inline GraphBundle load_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw BundleError("missing_file", "bundle directory " + dir.string() + " not found");
  GraphBundle b;

  const fs::path meta_path = dir / "meta.json";
  const auto meta = detail::read_json(meta_path);
  try {
    b.meta.n = meta.at("n").get<std::int32_t>();
    b.meta.c = meta.at("c").get<std::int32_t>();
    b.meta.num_classes = meta.at("num_classes").get<std::int32_t>();
    b.meta.name = meta.value("name", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw BundleError("malformed", meta_path.string() + ": " + e.what());
  }
  if (b.meta.n <= 0 || b.meta.c <= 0 || b.meta.num_classes <= 0)
    throw BundleError("invalid", meta_path.string() + ": n, c and num_classes must be positive");

  {
    const fs::path p = dir / "graph.edges";
    auto in = detail::open_input(p);
    std::vector<Edge> edges;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      const auto t = detail::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto sep = t.find_first_of(" \t");
      NodeId u = 0, v = 0;
      if (sep == std::string_view::npos || !detail::parse_number(t.substr(0, sep), u) ||
          !detail::parse_number(t.substr(sep + 1), v))
        throw BundleError("malformed", p.string() + ":" + std::to_string(lineno) + ": expected 'u v'");
      if (u < 0 || u >= b.meta.n || v < 0 || v >= b.meta.n)
        throw BundleError("invalid", p.string() + ":" + std::to_string(lineno) + ": node index out of range");
      edges.emplace_back(u, v);
    }
    b.graph = Graph::from_edge_list(edges, b.meta.n);
  }

  {
    const fs::path p = dir / "features.csv";
    auto in = detail::open_input(p);
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(b.meta.n) * static_cast<std::size_t>(b.meta.c));
    std::string line;
    std::size_t rows = 0;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (detail::trim(line).empty()) continue;
      std::string_view rest(line);
      std::int32_t cols = 0;
      while (true) {
        const auto comma = rest.find(',');
        double v = 0;
        if (!detail::parse_number(rest.substr(0, comma), v))
          throw BundleError("malformed", p.string() + ":" + std::to_string(lineno) + ": bad number in column " +
                                             std::to_string(cols + 1));
        data.push_back(v);
        ++cols;
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (cols != b.meta.c)
        throw BundleError("count_mismatch", p.string() + ":" + std::to_string(lineno) + ": " + std::to_string(cols) +
                                                " columns, meta says " + std::to_string(b.meta.c));
      ++rows;
    }
    if (rows != static_cast<std::size_t>(b.meta.n))
      throw BundleError("count_mismatch", p.string() + ": " + std::to_string(rows) + " rows, meta says " +
                                              std::to_string(b.meta.n));
    b.features = FeatureMatrix(rows, static_cast<std::size_t>(b.meta.c), std::move(data));
  }

  {
    const fs::path p = dir / "labels.csv";
    auto in = detail::open_input(p);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (detail::trim(line).empty()) continue;
      int y = 0;
      if (!detail::parse_number(std::string_view(line), y))
        throw BundleError("malformed", p.string() + ":" + std::to_string(lineno) + ": expected an integer label");
      if (y < 0 || y >= b.meta.num_classes)
        throw BundleError("invalid", p.string() + ":" + std::to_string(lineno) + ": label " + std::to_string(y) +
                                         " outside [0, num_classes)");
      b.labels.push_back(y);
    }
    if (b.labels.size() != static_cast<std::size_t>(b.meta.n))
      throw BundleError("count_mismatch", p.string() + ": " + std::to_string(b.labels.size()) +
                                              " labels, meta says " + std::to_string(b.meta.n));
  }

  {
    const fs::path p = dir / "splits.json";
    const auto j = detail::read_json(p);
    auto one = [&](const nlohmann::json& o) {
      if (!o.is_object()) throw BundleError("malformed", p.string() + ": split entries must be objects");
      Split s{detail::read_index_array(o, "train", p.string()), detail::read_index_array(o, "val", p.string()),
              detail::read_index_array(o, "test", p.string())};
      try {
        s.validate(b.meta.n);
      } catch (const std::exception& e) {
        throw BundleError("invalid", p.string() + ": " + e.what());
      }
      return s;
    };
    if (j.is_array()) {
      for (const auto& o : j) b.splits.push_back(one(o));
    } else {
      b.splits.push_back(one(j));
    }
    if (b.splits.empty()) throw BundleError("invalid", p.string() + ": no splits");
  }
  return b;
}

inline void save_bundle(const GraphBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw BundleError("missing_file", "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("meta.json");
    out << nlohmann::json{{"n", b.meta.n}, {"c", b.meta.c}, {"num_classes", b.meta.num_classes}, {"name", b.meta.name}}
               .dump(2)
        << '\n';
  }
  {
    auto out = open("graph.edges");
    for (const auto& [u, v] : b.graph.edge_list()) out << u << ' ' << v << '\n';
  }
  {
    auto out = open("features.csv");
    for (std::size_t r = 0; r < b.features.rows(); ++r) {
      auto row = b.features.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << detail::format_double(row[c]);
      out << '\n';
    }
  }
  {
    auto out = open("labels.csv");
    for (int y : b.labels) out << y << '\n';
  }
  {
    auto out = open("splits.json");
    nlohmann::json j;
    if (b.splits.size() == 1) {
      j = detail::split_to_json(b.splits.front());
    } else {
      j = nlohmann::json::array();
      for (const auto& s : b.splits) j.push_back(detail::split_to_json(s));
    }
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic graphs

enum class SynthKind { ErdosRenyi, TwoCliques, Star, Path, Karate };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "erdos_renyi") return SynthKind::ErdosRenyi;
  if (s == "two_cliques") return SynthKind::TwoCliques;
  if (s == "star") return SynthKind::Star;
  if (s == "path") return SynthKind::Path;
  if (s == "karate") return SynthKind::Karate;
  throw std::invalid_argument("unknown graph kind '" + s + "' (erdos_renyi|two_cliques|star|path|karate)");
}

struct SynthParams {
  std::int32_t n = 10;           // node count (erdos_renyi, star, path) or clique size (two_cliques)
  double edge_probability = 0.1;  // erdos_renyi
  std::int32_t num_classes = 2;   // erdos_renyi
  double feature_noise = 0.1;
  std::uint64_t seed = 0;
};

namespace detail {

// Zachary's karate club: 78 edges, two factions.
inline constexpr std::pair<int, int> kKarateEdges[] = {
    {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},   {0, 10},  {0, 11},
    {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},  {1, 2},   {1, 3},   {1, 7},   {1, 13},
    {1, 17},  {1, 19},  {1, 21},  {1, 30},  {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},
    {2, 28},  {2, 32},  {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
    {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33}, {15, 32}, {15, 33},
    {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32}, {22, 33}, {23, 25}, {23, 27}, {23, 29},
    {23, 32}, {23, 33}, {24, 25}, {24, 27}, {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31},
    {28, 33}, {29, 32}, {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33}};
inline constexpr int kKarateFaction[34] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
                                           0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

/// Per class: half train, a quarter validation, the rest test (each non-empty
/// when the class has at least three members).
inline Split stratified_split(std::span<const int> labels, int classes, std::uint64_t seed) {
  Split s;
  SplitMix64 rng(seed);
  for (int c = 0; c < classes; ++c) {
    std::vector<std::int32_t> members;
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels[v] == c) members.push_back(static_cast<std::int32_t>(v));
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.below(static_cast<std::uint32_t>(i))]);
    const std::size_t m = members.size();
    std::size_t n_train = std::max<std::size_t>(m / 2, m ? 1 : 0);
    std::size_t n_val = m >= 3 ? std::max<std::size_t>(m / 4, 1) : 0;
    if (m >= 3 && n_train + n_val >= m) n_train = m - n_val - 1;
    for (std::size_t i = 0; i < m; ++i)
      (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(members[i]);
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

}  // namespace detail

/// Deterministic synthetic bundle. Features are a noisy one-hot of the label
/// plus two pure-noise channels.
inline GraphBundle synth_graph(SynthKind kind, const SynthParams& params) {
  std::vector<Edge> edges;
  std::vector<int> labels;
  int classes = 2;
  std::string name;
  SplitMix64 rng(mix_seed(params.seed, 0));
  switch (kind) {
    case SynthKind::ErdosRenyi: {
      if (params.n < 1 || !(params.edge_probability >= 0 && params.edge_probability <= 1) || params.num_classes < 1)
        throw std::invalid_argument("synth erdos_renyi: need n >= 1, 0 <= p <= 1, classes >= 1");
      for (NodeId u = 0; u < params.n; ++u)
        for (NodeId v = u + 1; v < params.n; ++v)
          if (rng.uniform() < params.edge_probability) edges.emplace_back(u, v);
      classes = params.num_classes;
      for (NodeId v = 0; v < params.n; ++v) labels.push_back(static_cast<int>(rng.below(static_cast<std::uint32_t>(classes))));
      name = "erdos_renyi";
      break;
    }
    case SynthKind::TwoCliques: {
      const NodeId m = params.n;
      if (m < 2) throw std::invalid_argument("synth two_cliques: clique size must be >= 2");
      for (int side = 0; side < 2; ++side)
        for (NodeId u = 0; u < m; ++u)
          for (NodeId v = u + 1; v < m; ++v) edges.emplace_back(side * m + u, side * m + v);
      edges.emplace_back(m - 1, m);
      for (NodeId v = 0; v < 2 * m; ++v) labels.push_back(v < m ? 0 : 1);
      name = "two_cliques";
      break;
    }
    case SynthKind::Star: {
      if (params.n < 2) throw std::invalid_argument("synth star: need n >= 2");
      for (NodeId v = 1; v < params.n; ++v) edges.emplace_back(0, v);
      for (NodeId v = 0; v < params.n; ++v) labels.push_back(v == 0 ? 0 : 1);
      name = "star";
      break;
    }
    case SynthKind::Path: {
      if (params.n < 2) throw std::invalid_argument("synth path: need n >= 2");
      for (NodeId v = 0; v + 1 < params.n; ++v) edges.emplace_back(v, v + 1);
      for (NodeId v = 0; v < params.n; ++v) labels.push_back(v < params.n / 2 ? 0 : 1);
      name = "path";
      break;
    }
    case SynthKind::Karate: {
      for (const auto& [u, v] : detail::kKarateEdges) edges.emplace_back(u, v);
      labels.assign(std::begin(detail::kKarateFaction), std::end(detail::kKarateFaction));
      name = "karate";
      break;
    }
  }
  if (params.feature_noise < 0) throw std::invalid_argument("synth: feature_noise must be >= 0");

  GraphBundle b;
  const auto n = static_cast<NodeId>(labels.size());
  b.graph = Graph::from_edge_list(edges, n);
  b.labels = labels;
  const std::size_t c = static_cast<std::size_t>(classes) + 2;
  b.features = FeatureMatrix(static_cast<std::size_t>(n), c);
  SplitMix64 noise(mix_seed(params.seed, 1));
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t ch = 0; ch < c; ++ch)
      b.features(v, ch) = (static_cast<int>(ch) == labels[v] ? 1.0 : 0.0) +
                          noise.uniform(-params.feature_noise, params.feature_noise);
  b.splits.push_back(detail::stratified_split(labels, classes, mix_seed(params.seed, 2)));
  b.meta = {n, static_cast<std::int32_t>(c), classes, name};
  return b;
}

}  // namespace pathgcn
