#pragma once

// Message-passing structure of one graph: the ordered list of
// (receiver, sender) pairs that exchange a message, plus static edge input
// features. Every node always has a self-pair, so aggregations are never
// empty. Pairs are ordered by (receiver, sender), which fixes the
// accumulation order everywhere downstream.

#include <vector>

#include "nar/graph.hpp"

namespace nar {

enum class Connectivity : int {
  symmetric = 0,  // message j->i whenever i->j or j->i is an edge (or i == j)
  directed = 1,   // message j->i only along edges j->i (plus self)
  full = 2,       // messages between all pairs
};

struct PairList {
  int n = 0;
  std::vector<int> receivers;
  std::vector<int> senders;
  // Static per-pair inputs: {edge sender->receiver, edge receiver->sender, self}.
  std::vector<uint8_t> base;

  int count() const { return static_cast<int>(receivers.size()); }
  static constexpr int kBaseChannels = 3;
};

inline PairList build_pairs(const Graph& g, Connectivity conn) {
  PairList p;
  p.n = g.n;
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) {
      bool keep = i == j;
      if (!keep) {
        switch (conn) {
          case Connectivity::symmetric: keep = g.edge(i, j) || g.edge(j, i); break;
          case Connectivity::directed: keep = g.edge(j, i); break;
          case Connectivity::full: keep = true; break;
        }
      }
      if (!keep) continue;
      p.receivers.push_back(i);
      p.senders.push_back(j);
      p.base.push_back(i != j && g.edge(j, i) ? 1 : 0);
      p.base.push_back(i != j && g.edge(i, j) ? 1 : 0);
      p.base.push_back(i == j ? 1 : 0);
    }
  }
  return p;
}

}  // namespace nar
