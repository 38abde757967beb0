#pragma once

#include <cstdint>
#include <vector>

#include "nar/common.hpp"

namespace nar {

// Directed graph over n nodes. adj[i*n+j] != 0 means an edge i -> j.
// Neighbor iteration order is always index-ascending; the oracle depends on it.
struct Graph {
  enum class Source : uint8_t { er = 0, binary_tree = 1 };

  int n = 0;
  std::vector<uint8_t> adj;
  Source source = Source::er;
  double p = 0.0;       // E-R edge probability (0 for trees)
  uint64_t seed = 0;    // generator seed for this graph

  bool edge(int i, int j) const { return adj[static_cast<size_t>(i) * n + j] != 0; }

  int edge_count() const {
    int c = 0;
    for (auto b : adj) c += b != 0;
    return c;
  }

  std::vector<int> out_neighbors(int u) const {
    std::vector<int> out;
    for (int v = 0; v < n; ++v)
      if (edge(u, v)) out.push_back(v);
    return out;
  }
};

// Erdős–Rényi: every ordered pair (i, j), i != j, is an edge independently
// with probability p. Deterministic given the seed.
Graph gen_er(int n, double p, uint64_t seed);

// Random binary tree built by sequential attachment to a uniformly chosen
// node with fewer than two children, followed by a random relabeling.
// Edges are oriented parent -> child.
Graph gen_binary_tree(int n, uint64_t seed);

}  // namespace nar
