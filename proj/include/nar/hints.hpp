#pragma once

// Hint tables are data: each scheme is a list of HintSpec entries that the
// encoder, decoders, and losses iterate over generically. The recursive
// scheme carries current-node graph hints plus the stack operation; the
// baseline scheme carries CLRS-style per-node arrays.

#include <string>
#include <vector>

#include "nar/oracle.hpp"

namespace nar {

enum class HintLoc : int { node = 0, graph = 1 };
enum class HintType : int { categorical = 0, node_pointer = 1, scalar = 2, mask = 3 };
enum class HintRole : int { input_only = 0, hint = 1 };

struct HintSpec {
  std::string name;
  HintLoc loc = HintLoc::node;
  HintType type = HintType::scalar;
  HintRole role = HintRole::hint;
  int categories = 0;      // for categorical
  bool none_slot = false;  // graph pointers that may point at nothing (u_v)
};

inline std::vector<HintSpec> recursive_hint_specs() {
  using L = HintLoc;
  using T = HintType;
  using R = HintRole;
  return {
      {"pos", L::node, T::scalar, R::input_only, 0, false},
      {"color", L::node, T::categorical, R::hint, kColorCount, false},
      {"u", L::graph, T::node_pointer, R::hint, 0, false},
      {"u_pi", L::graph, T::node_pointer, R::hint, 0, false},
      {"u_v", L::graph, T::node_pointer, R::hint, 0, true},
      {"u_d", L::graph, T::scalar, R::hint, 0, false},
      {"u_f", L::graph, T::scalar, R::hint, 0, false},
      {"time", L::graph, T::scalar, R::hint, 0, false},
      {"stack_op", L::graph, T::categorical, R::hint, kStackOpCount, false},
  };
}

inline std::vector<HintSpec> baseline_hint_specs() {
  using L = HintLoc;
  using T = HintType;
  using R = HintRole;
  return {
      {"pos", L::node, T::scalar, R::input_only, 0, false},
      {"color", L::node, T::categorical, R::hint, kColorCount, false},
      {"pi_h", L::node, T::node_pointer, R::hint, 0, false},
      {"d", L::node, T::scalar, R::hint, 0, false},
      {"f", L::node, T::scalar, R::hint, 0, false},
      {"s_prev", L::node, T::mask, R::hint, 0, false},
      {"s", L::node, T::mask, R::hint, 0, false},
      {"u", L::node, T::mask, R::hint, 0, false},
      {"v", L::node, T::mask, R::hint, 0, false},
      {"s_last", L::node, T::mask, R::hint, 0, false},
      {"time", L::graph, T::scalar, R::hint, 0, false},
  };
}

inline std::vector<HintSpec> hint_scheme_specs(HintScheme scheme) {
  return scheme == HintScheme::recursive ? recursive_hint_specs() : baseline_hint_specs();
}

// Dense input width of one hint at its location (per node for node hints).
inline int hint_channels(const HintSpec& spec, int n) {
  switch (spec.type) {
    case HintType::categorical: return spec.categories;
    case HintType::node_pointer: return spec.loc == HintLoc::node ? n : 1;
    case HintType::scalar: return 1;
    case HintType::mask: return 1;
  }
  return 0;
}

inline int64_t hint_dense_size(const HintSpec& spec, int n) {
  const int64_t locs = spec.loc == HintLoc::node ? n : 1;
  return locs * hint_channels(spec, n);
}

// Supervision targets for one step. Categorical/pointer hints use class
// indices (graph pointers use n for the none slot); scalar/mask hints use
// dense values. Entries are aligned with the scheme's spec list.
template <class S>
struct StepTargetsT {
  std::vector<std::vector<int>> indices;
  std::vector<std::vector<S>> values;
};

// Dense (hard one-hot) hint inputs for one step, aligned with the spec list.
template <class S>
struct HintValuesT {
  std::vector<std::vector<S>> dense;
};

template <class S>
StepTargetsT<S> step_targets(const Trajectory& traj, int step) {
  const int n = traj.graph.n;
  const S denom = S(2) * S(n);
  const auto specs = hint_scheme_specs(traj.scheme);
  StepTargetsT<S> out;
  out.indices.resize(specs.size());
  out.values.resize(specs.size());

  auto norm_time = [&](int t) { return t <= 0 ? S(0) : S(t) / denom; };

  if (traj.scheme == HintScheme::recursive) {
    const StepSnapshot& s = traj.snapshots[step];
    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      if (spec.name == "pos") {
        auto& v = out.values[k];
        v.resize(n);
        for (int i = 0; i < n; ++i) v[i] = S(i) / S(n);
      } else if (spec.name == "color") {
        auto& idx = out.indices[k];
        idx.resize(n);
        for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(s.colors[i]);
      } else if (spec.name == "u") {
        out.indices[k] = {s.u};
      } else if (spec.name == "u_pi") {
        out.indices[k] = {s.u_pi};
      } else if (spec.name == "u_v") {
        out.indices[k] = {s.u_v < 0 ? n : s.u_v};
      } else if (spec.name == "u_d") {
        out.values[k] = {norm_time(s.u_d)};
      } else if (spec.name == "u_f") {
        out.values[k] = {norm_time(s.u_f)};
      } else if (spec.name == "time") {
        out.values[k] = {norm_time(s.time)};
      } else if (spec.name == "stack_op") {
        out.indices[k] = {static_cast<int>(s.stack_op)};
      }
    }
  } else {
    const BaselineSnapshot& b = traj.baseline_snapshots[step];
    auto mask_of = [&](int node) {
      std::vector<S> v(n, S(0));
      if (node >= 0) v[node] = S(1);
      return v;
    };
    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      if (spec.name == "pos") {
        auto& v = out.values[k];
        v.resize(n);
        for (int i = 0; i < n; ++i) v[i] = S(i) / S(n);
      } else if (spec.name == "color") {
        auto& idx = out.indices[k];
        idx.resize(n);
        for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(b.colors[i]);
      } else if (spec.name == "pi_h") {
        out.indices[k] = b.pi_h;
      } else if (spec.name == "d") {
        auto& v = out.values[k];
        v.resize(n);
        for (int i = 0; i < n; ++i) v[i] = norm_time(b.d[i]);
      } else if (spec.name == "f") {
        auto& v = out.values[k];
        v.resize(n);
        for (int i = 0; i < n; ++i) v[i] = norm_time(b.f[i]);
      } else if (spec.name == "s_prev") {
        out.values[k] = mask_of(b.s_prev);
      } else if (spec.name == "s") {
        out.values[k] = mask_of(b.s);
      } else if (spec.name == "u") {
        out.values[k] = mask_of(b.u);
      } else if (spec.name == "v") {
        out.values[k] = mask_of(b.v);
      } else if (spec.name == "s_last") {
        out.values[k] = mask_of(b.s_last);
      } else if (spec.name == "time") {
        out.values[k] = {norm_time(b.time)};
      }
    }
  }
  return out;
}

// Expands targets into dense one-hot inputs (the teacher-forced encoding).
template <class S>
HintValuesT<S> hints_from_targets(const std::vector<HintSpec>& specs,
                                  const StepTargetsT<S>& targets, int n) {
  HintValuesT<S> out;
  out.dense.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    auto& dense = out.dense[k];
    dense.assign(hint_dense_size(spec, n), S(0));
    switch (spec.type) {
      case HintType::categorical: {
        const auto& idx = targets.indices[k];
        for (size_t i = 0; i < idx.size(); ++i)
          if (idx[i] >= 0) dense[i * spec.categories + idx[i]] = S(1);
        break;
      }
      case HintType::node_pointer: {
        const auto& idx = targets.indices[k];
        if (spec.loc == HintLoc::graph) {
          if (idx[0] >= 0 && idx[0] < n) dense[idx[0]] = S(1);
          // the none slot encodes as all-zero indicators
        } else {
          for (size_t i = 0; i < idx.size(); ++i)
            if (idx[i] >= 0) dense[i * n + idx[i]] = S(1);
        }
        break;
      }
      case HintType::scalar:
      case HintType::mask: {
        dense = targets.values[k];
        break;
      }
    }
  }
  return out;
}

template <class S>
HintValuesT<S> ground_truth_hints(const Trajectory& traj, int step) {
  const auto specs = hint_scheme_specs(traj.scheme);
  return hints_from_targets<S>(specs, step_targets<S>(traj, step), traj.graph.n);
}

}  // namespace nar
