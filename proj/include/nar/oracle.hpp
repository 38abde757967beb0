#pragma once

// Classical depth-first search executed exactly as in the textbook recursive
// form: the main loop scans vertices in index order, DFS-Visit scans Adj[u] in
// index order, and the global time counter is incremented at each discovery
// and finish. Trajectories record one snapshot per discover/examine/finish
// event along with the call-stack operation that the event implies.

#include <string>
#include <vector>

#include "nar/graph.hpp"

namespace nar {

enum class StackOp : int { push = 0, pop = 1, noop = 2 };
enum class NodeColor : int { white = 0, gray = 1, black = 2 };
enum class StepKind : int { discover = 0, examine = 1, finish = 2 };

constexpr int kStackOpCount = 3;
constexpr int kColorCount = 3;

struct DfsResult {
  std::vector<int> pi;  // predecessor; roots point to themselves
  std::vector<int> d;   // discovery times, 1-based
  std::vector<int> f;   // finish times
  int max_recursion_depth = 0;
};

DfsResult run_dfs(const Graph& g);

// One event of the recursive hint scheme. Sentinels: u_f = -1 while the
// current node is unfinished, u_v = -1 when no neighbor is under examination.
struct StepSnapshot {
  StepKind kind = StepKind::discover;
  int u = 0;
  int u_pi = 0;
  int u_d = 0;
  int u_f = -1;
  int u_v = -1;
  std::vector<NodeColor> colors;
  int time = 0;
  StackOp stack_op = StackOp::noop;
};

// One event of the approximate CLRS-style per-node scheme. Array entries use
// 0 for unset times; mask fields use -1 for the all-zero mask.
struct BaselineSnapshot {
  std::vector<int> pi_h;
  std::vector<NodeColor> colors;
  std::vector<int> d;
  std::vector<int> f;
  int s = 0;
  int u = 0;
  int v = -1;
  int s_prev = 0;
  int s_last = -1;
  int time = 0;
};

enum class HintScheme : int { recursive = 0, baseline = 1 };

struct Trajectory {
  Graph graph;
  HintScheme scheme = HintScheme::recursive;
  std::vector<StepSnapshot> snapshots;
  std::vector<BaselineSnapshot> baseline_snapshots;  // filled for baseline scheme
  std::vector<int> pi;                               // ground-truth output table

  int length() const { return static_cast<int>(snapshots.size()); }
};

Trajectory sample_trajectory_recursive(const Graph& g);
Trajectory sample_trajectory_baseline(const Graph& g);

// Debug JSON export of a trajectory's snapshots.
std::string trajectory_to_json(const Trajectory& t);

const char* to_string(StackOp op);
const char* to_string(NodeColor c);
const char* to_string(StepKind k);

}  // namespace nar
