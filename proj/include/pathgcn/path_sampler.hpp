#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathgcn/graph.hpp"
#include "pathgcn/random.hpp"

namespace pathgcn {

struct WalkConfig {
  int length = 1;  // nodes per walk, origin included
  int paths = 1;   // walks per origin
  std::uint64_t seed = 0;
};

/// n x p x k node indices; walk (j, w) starts at j.
class PathSet {
 public:
  PathSet() = default;
  PathSet(NodeId n, int p, int k, std::uint64_t seed)
      : n_(n), p_(p), k_(k), seed_(seed),
        indices_(static_cast<std::size_t>(n) * static_cast<std::size_t>(p) * static_cast<std::size_t>(k)) {}

  NodeId num_origins() const noexcept { return n_; }
  int paths_per_node() const noexcept { return p_; }
  int length() const noexcept { return k_; }
  std::uint64_t seed() const noexcept { return seed_; }

  NodeId at(NodeId j, int w, int i) const noexcept { return indices_[offset(j, w) + i]; }
  std::span<const NodeId> walk(NodeId j, int w) const noexcept {
    return {indices_.data() + offset(j, w), static_cast<std::size_t>(k_)};
  }
  std::span<NodeId> walk(NodeId j, int w) noexcept {
    return {indices_.data() + offset(j, w), static_cast<std::size_t>(k_)};
  }
  std::span<const NodeId> indices() const noexcept { return indices_; }
  std::span<NodeId> indices() noexcept { return indices_; }

  friend bool operator==(const PathSet&, const PathSet&) = default;

 private:
  std::size_t offset(NodeId j, int w) const noexcept {
    return (static_cast<std::size_t>(j) * p_ + static_cast<std::size_t>(w)) * k_;
  }

  NodeId n_ = 0;
  int p_ = 0;
  int k_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<NodeId> indices_;
};

inline void validate(const WalkConfig& cfg) {
  if (cfg.length < 1) throw std::invalid_argument("WalkConfig: length must be >= 1");
  if (cfg.paths < 1) throw std::invalid_argument("WalkConfig: paths must be >= 1");
}

/// Uniform first-order random walks. Every origin draws from its own stream
/// seeded by (seed, origin), so the result does not depend on visiting order.
inline PathSet sample_paths(const Graph& g, const WalkConfig& cfg) {
  validate(cfg);
  const NodeId n = g.num_nodes();
  PathSet out(n, cfg.paths, cfg.length, cfg.seed);
  for (NodeId j = 0; j < n; ++j) {
    SplitMix64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(j)));
    for (int w = 0; w < cfg.paths; ++w) {
      auto walk = out.walk(j, w);
      NodeId cur = j;
      walk[0] = cur;
      for (int i = 1; i < cfg.length; ++i) {
        auto nbrs = g.neighbors(cur);
        if (!nbrs.empty()) cur = nbrs[rng.below(static_cast<std::uint32_t>(nbrs.size()))];
        walk[i] = cur;
      }
    }
  }
  return out;
}

/// Fresh path set for a training iteration; replayable from (seed, iteration).
inline PathSet resample(const Graph& g, const WalkConfig& cfg, std::uint64_t iteration) {
  WalkConfig c = cfg;
  c.seed = mix_seed(cfg.seed, iteration);
  return sample_paths(g, c);
}

// Debug dump: u32 magic, u32 version, then n, p, k, seed_lo, seed_hi and the
// row-major index payload, all little-endian u32.
inline constexpr std::uint32_t kPathSetMagic = 0x48544150;  // "PATH"
inline constexpr std::uint32_t kPathSetVersion = 1;

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                        static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw std::runtime_error("path dump: truncated");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}
}  // namespace detail

inline void write_pathset(std::ostream& os, const PathSet& ps) {
  detail::put_u32(os, kPathSetMagic);
  detail::put_u32(os, kPathSetVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(ps.num_origins()));
  detail::put_u32(os, static_cast<std::uint32_t>(ps.paths_per_node()));
  detail::put_u32(os, static_cast<std::uint32_t>(ps.length()));
  detail::put_u32(os, static_cast<std::uint32_t>(ps.seed() & 0xffffffffu));
  detail::put_u32(os, static_cast<std::uint32_t>(ps.seed() >> 32));
  for (NodeId v : ps.indices()) detail::put_u32(os, static_cast<std::uint32_t>(v));
}

inline PathSet read_pathset(std::istream& is) {
  if (detail::get_u32(is) != kPathSetMagic) throw std::runtime_error("path dump: bad magic");
  if (detail::get_u32(is) != kPathSetVersion) throw std::runtime_error("path dump: unsupported version");
  const auto n = static_cast<NodeId>(detail::get_u32(is));
  const auto p = static_cast<int>(detail::get_u32(is));
  const auto k = static_cast<int>(detail::get_u32(is));
  const std::uint64_t lo = detail::get_u32(is);
  const std::uint64_t hi = detail::get_u32(is);
  PathSet ps(n, p, k, lo | (hi << 32));
  for (NodeId& v : ps.indices()) v = static_cast<NodeId>(detail::get_u32(is));
  return ps;
}

}  // namespace pathgcn
