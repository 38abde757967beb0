#include "nar/oracle.hpp"

#include <sstream>

#include "json.hpp"

namespace nar {

namespace {

// Shared execution core. The three callbacks fire in the exact event order of
// the recursive algorithm; recursion into a white neighbor happens between the
// examine event and the parent's next examine.
template <class Discover, class Examine, class Finish>
int dfs_walk(const Graph& g, Discover on_discover, Examine on_examine, Finish on_finish) {
  const int n = g.n;
  std::vector<NodeColor> color(n, NodeColor::white);
  std::vector<int> pi(n);
  for (int i = 0; i < n; ++i) pi[i] = i;
  int time = 0;
  int depth = 0, max_depth = 0;

  struct Ctx {
    const Graph& g;
    std::vector<NodeColor>& color;
    std::vector<int>& pi;
    int& time;
    int& depth;
    int& max_depth;
    Discover& on_discover;
    Examine& on_examine;
    Finish& on_finish;

    void visit(int u) {
      ++depth;
      max_depth = std::max(max_depth, depth);
      ++time;
      color[u] = NodeColor::gray;
      on_discover(u, pi[u], time, color);
      for (int v = 0; v < g.n; ++v) {
        if (!g.edge(u, v)) continue;
        on_examine(u, v, time, color);
        if (color[v] == NodeColor::white) {
          pi[v] = u;
          visit(v);
        }
      }
      color[u] = NodeColor::black;
      ++time;
      on_finish(u, pi[u], time, color);
      --depth;
    }
  } ctx{g, color, pi, time, depth, max_depth, on_discover, on_examine, on_finish};

  for (int u = 0; u < n; ++u)
    if (color[u] == NodeColor::white) ctx.visit(u);
  return max_depth;
}

}  // namespace

DfsResult run_dfs(const Graph& g) {
  const int n = g.n;
  DfsResult r;
  r.pi.resize(n);
  for (int i = 0; i < n; ++i) r.pi[i] = i;
  r.d.assign(n, 0);
  r.f.assign(n, 0);
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  r.max_recursion_depth = dfs_walk(
      g,
      [&](int u, int u_pi, int time, const std::vector<NodeColor>&) {
        r.d[u] = time;
        r.pi[u] = u_pi;
      },
      [](int, int, int, const std::vector<NodeColor>&) {},
      [&](int u, int, int time, const std::vector<NodeColor>&) { r.f[u] = time; });
  return r;
}

Trajectory sample_trajectory_recursive(const Graph& g) {
  Trajectory t;
  t.graph = g;
  t.scheme = HintScheme::recursive;
  const int n = g.n;
  std::vector<int> d(n, 0), f(n, -1), pi(n);
  for (int i = 0; i < n; ++i) pi[i] = i;

  auto snapshot = [&](StepKind kind, int u, int u_v, int time,
                      const std::vector<NodeColor>& colors, StackOp op) {
    StepSnapshot s;
    s.kind = kind;
    s.u = u;
    s.u_pi = pi[u];
    s.u_d = d[u];
    s.u_f = f[u];
    s.u_v = u_v;
    s.colors = colors;
    s.time = time;
    s.stack_op = op;
    t.snapshots.push_back(std::move(s));
  };

  dfs_walk(
      g,
      [&](int u, int u_pi, int time, const std::vector<NodeColor>& colors) {
        d[u] = time;
        pi[u] = u_pi;
        snapshot(StepKind::discover, u, -1, time, colors, StackOp::push);
      },
      [&](int u, int v, int time, const std::vector<NodeColor>& colors) {
        snapshot(StepKind::examine, u, v, time, colors, StackOp::noop);
      },
      [&](int u, int, int time, const std::vector<NodeColor>& colors) {
        f[u] = time;
        snapshot(StepKind::finish, u, -1, time, colors, StackOp::pop);
      });

  const DfsResult res = run_dfs(g);
  t.pi = res.pi;
  return t;
}

Trajectory sample_trajectory_baseline(const Graph& g) {
  Trajectory t;
  t.graph = g;
  t.scheme = HintScheme::baseline;
  const int n = g.n;
  std::vector<int> d(n, 0), f(n, 0), f_rec(n, -1), d_rec(n, 0);
  std::vector<int> pi_h(n);
  for (int i = 0; i < n; ++i) pi_h[i] = i;
  int prev_u = -1;
  int last_finished = -1;

  auto emit = [&](StepKind kind, int u, int u_pi, int u_v, int time,
                  const std::vector<NodeColor>& colors, StackOp op) {
    StepSnapshot s;
    s.kind = kind;
    s.u = u;
    s.u_pi = u_pi;
    s.u_d = d_rec[u];
    s.u_f = f_rec[u];
    s.u_v = u_v;
    s.colors = colors;
    s.time = time;
    s.stack_op = op;
    t.snapshots.push_back(s);

    BaselineSnapshot b;
    b.pi_h = pi_h;
    b.colors = colors;
    b.d = d;
    b.f = f;
    b.s = u;
    b.u = u;
    b.v = u_v;
    b.s_prev = prev_u < 0 ? u : prev_u;
    b.s_last = last_finished;
    b.time = time;
    t.baseline_snapshots.push_back(std::move(b));
    prev_u = u;
  };

  dfs_walk(
      g,
      [&](int u, int u_pi, int time, const std::vector<NodeColor>& colors) {
        d[u] = time;
        d_rec[u] = time;
        pi_h[u] = u_pi;
        emit(StepKind::discover, u, u_pi, -1, time, colors, StackOp::push);
      },
      [&](int u, int v, int time, const std::vector<NodeColor>& colors) {
        emit(StepKind::examine, u, pi_h[u], v, time, colors, StackOp::noop);
      },
      [&](int u, int u_pi, int time, const std::vector<NodeColor>& colors) {
        f[u] = time;
        f_rec[u] = time;
        emit(StepKind::finish, u, u_pi, -1, time, colors, StackOp::pop);
        last_finished = u;
      });

  const DfsResult res = run_dfs(g);
  t.pi = res.pi;
  return t;
}

const char* to_string(StackOp op) {
  switch (op) {
    case StackOp::push: return "push";
    case StackOp::pop: return "pop";
    default: return "noop";
  }
}

const char* to_string(NodeColor c) {
  switch (c) {
    case NodeColor::white: return "white";
    case NodeColor::gray: return "gray";
    default: return "black";
  }
}

const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::discover: return "discover";
    case StepKind::examine: return "examine";
    default: return "finish";
  }
}

std::string trajectory_to_json(const Trajectory& t) {
  nlohmann::json j;
  j["n"] = t.graph.n;
  j["scheme"] = t.scheme == HintScheme::recursive ? "recursive" : "baseline";
  j["pi"] = t.pi;
  auto& steps = j["steps"] = nlohmann::json::array();
  for (size_t i = 0; i < t.snapshots.size(); ++i) {
    const auto& s = t.snapshots[i];
    nlohmann::json e;
    e["kind"] = to_string(s.kind);
    e["u"] = s.u;
    e["u_pi"] = s.u_pi;
    e["u_d"] = s.u_d;
    e["u_f"] = s.u_f;
    e["u_v"] = s.u_v;
    e["time"] = s.time;
    e["stack_op"] = to_string(s.stack_op);
    std::string colors;
    for (auto c : s.colors) colors += "wgb"[static_cast<int>(c)];
    e["colors"] = colors;
    if (t.scheme == HintScheme::baseline) {
      const auto& b = t.baseline_snapshots[i];
      e["pi_h"] = b.pi_h;
      e["s_prev"] = b.s_prev;
      e["s_last"] = b.s_last;
    }
    steps.push_back(std::move(e));
  }
  return j.dump();
}

}  // namespace nar
