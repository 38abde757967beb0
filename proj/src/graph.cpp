#include "nar/graph.hpp"

namespace nar {

Graph gen_er(int n, double p, uint64_t seed) {
  if (n < 1) throw InvalidInput("gen_er: node count must be at least 1");
  if (p < 0.0 || p > 1.0) throw InvalidInput("gen_er: edge probability must lie in [0, 1]");
  Graph g;
  g.n = n;
  g.adj.assign(static_cast<size_t>(n) * n, 0);
  g.source = Graph::Source::er;
  g.p = p;
  g.seed = seed;
  Rng rng(seed);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (rng.bernoulli(p)) g.adj[static_cast<size_t>(i) * n + j] = 1;
    }
  return g;
}

Graph gen_binary_tree(int n, uint64_t seed) {
  if (n < 1) throw InvalidInput("gen_binary_tree: node count must be at least 1");
  Graph g;
  g.n = n;
  g.adj.assign(static_cast<size_t>(n) * n, 0);
  g.source = Graph::Source::binary_tree;
  g.p = 0.0;
  g.seed = seed;
  Rng rng(seed);

  std::vector<int> parent(n, -1);
  std::vector<int> child_count(n, 0);
  std::vector<int> open;  // nodes with < 2 children, in insertion order
  open.push_back(0);
  for (int k = 1; k < n; ++k) {
    const size_t pick = rng.below(open.size());
    const int par = open[pick];
    parent[k] = par;
    if (++child_count[par] == 2) open.erase(open.begin() + static_cast<ptrdiff_t>(pick));
    open.push_back(k);
  }

  std::vector<int> label(n);
  for (int i = 0; i < n; ++i) label[i] = i;
  rng.shuffle(label);

  for (int k = 1; k < n; ++k) {
    const int from = label[parent[k]];
    const int to = label[k];
    g.adj[static_cast<size_t>(from) * n + to] = 1;
  }
  return g;
}

}  // namespace nar
