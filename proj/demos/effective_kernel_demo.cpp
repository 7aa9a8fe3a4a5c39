// Effective kernels of one fixed spatial kernel on a few different graphs.
// The same s yields a different weight distribution around each origin,
// which is what a learnt spatial operator adapts to.

#include <cstdio>

#include "pathgcn/pathgcn.hpp"

using namespace pathgcn;

namespace {

void show(const char* title, const GraphBundle& b, NodeId origin, const std::vector<double>& s) {
  const int k = static_cast<int>(s.size());
  const SparseWeights det = effective_kernel_deterministic(b.graph, s, origin);
  const SparseWeights sto = effective_kernel_stochastic(sample_paths(b.graph, {k, 20, 7}), s, origin);
  std::printf("%s, origin %d\n  node  deterministic  stochastic(p=20)\n", title, origin);
  for (auto [v, w] : det) {
    const auto it = sto.find(v);
    std::printf("  %4d  %13.4f  %16.4f\n", v, w, it == sto.end() ? 0.0 : it->second);
  }
  std::printf("\n");
}

}  // namespace

int main() {
  const std::vector<double> s{0.4, 0.3, 0.2, 0.1};
  show("path(7)", synth_graph(SynthKind::Path, {.n = 7}), 3, s);
  show("star(6), hub", synth_graph(SynthKind::Star, {.n = 6}), 0, s);
  show("star(6), leaf", synth_graph(SynthKind::Star, {.n = 6}), 2, s);
  show("two_cliques(4), bridge node", synth_graph(SynthKind::TwoCliques, {.n = 4}), 3, s);
  return 0;
}
