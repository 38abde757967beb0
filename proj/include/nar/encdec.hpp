#pragma once

// Hint encoders and decoders around the processor (the f / g networks).
// Every hint is embedded by its own linear layer and summed into the features
// at its location. Graph hints that name a node enter as per-node indicator
// channels and decode as a softmax over nodes, which keeps the whole pipeline
// size-invariant. Node-located pointer hints (the baseline predecessor array)
// enter as edge indicator channels and decode through a pairwise bilinear
// head.

#include <vector>

#include "nar/hints.hpp"
#include "nar/layers.hpp"
#include "nar/pairs.hpp"
#include "nar/tensor.hpp"

namespace nar {

// Per-step hint inputs as tensors, aligned with the scheme's spec list.
// Shapes: node categorical [n,k], node scalar/mask [n,1], node pointer [n,n],
// graph pointer [n,1] (indicator column), graph scalar [1,1],
// graph categorical [1,k].
template <class S>
struct StepInputsT {
  std::vector<TensorT<S>> dense;
};

template <class S>
std::vector<int> step_input_shape(const HintSpec& spec, int n) {
  switch (spec.type) {
    case HintType::categorical:
      return spec.loc == HintLoc::node ? std::vector<int>{n, spec.categories}
                                       : std::vector<int>{1, spec.categories};
    case HintType::node_pointer:
      return spec.loc == HintLoc::node ? std::vector<int>{n, n} : std::vector<int>{n, 1};
    case HintType::scalar:
    case HintType::mask:
      return spec.loc == HintLoc::node ? std::vector<int>{n, 1} : std::vector<int>{1, 1};
  }
  return {};
}

// Constant (hard) inputs from dense hint values.
template <class S>
StepInputsT<S> step_inputs_from_values(const std::vector<HintSpec>& specs,
                                       const HintValuesT<S>& values, int n) {
  StepInputsT<S> out;
  out.dense.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k)
    out.dense[k] = TensorT<S>::from(step_input_shape<S>(specs[k], n), values.dense[k]);
  return out;
}

template <class S>
struct EncodedStepT {
  TensorT<S> h_i;      // [n, d_h]
  TensorT<S> h_g;      // [1, d_h] encoded graph features
  TensorT<S> edge_in;  // [P, ea] raw edge inputs
  TensorT<S> edge_w;   // [ea, d_h] edge embedding; h_ij = edge_in @ edge_w
};

template <class S>
struct EncoderSetT {
  std::vector<HintSpec> specs;
  int d_h = 0;
  std::vector<TensorT<S>> hint_w;  // per hint, [channels, d_h]; node pointers use [1, d_h]
  TensorT<S> adj_w;                // [3, d_h]

  void build(const std::vector<HintSpec>& hint_specs, int width, Rng& rng,
             ParamRegistryT<S>& reg) {
    specs = hint_specs;
    d_h = width;
    hint_w.clear();
    for (const auto& spec : specs) {
      const int in = spec.type == HintType::categorical ? spec.categories : 1;
      hint_w.push_back(reg.add("enc." + spec.name + ".W", TensorT<S>::glorot(in, d_h, rng)));
    }
    adj_w = reg.add("enc.adj.W", TensorT<S>::glorot(PairList::kBaseChannels, d_h, rng));
  }

  EncodedStepT<S> encode(const StepInputsT<S>& inputs, const PairList& pairs) const {
    const int n = pairs.n;
    if (inputs.dense.size() != specs.size())
      throw InvalidInput("encode: hint value count does not match the spec table");
    EncodedStepT<S> out;
    TensorT<S> h_i, h_g;
    std::vector<TensorT<S>> edge_cols;
    std::vector<TensorT<S>> edge_ws;

    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      const auto& x = inputs.dense[k];
      if (!x.defined()) throw InvalidInput("encode: missing value for hint " + spec.name);
      if (x.shape() != step_input_shape<S>(spec, n))
        throw DimensionError("encode: bad shape for hint " + spec.name);

      if (spec.type == HintType::node_pointer && spec.loc == HintLoc::node) {
        // Pointer i -> j becomes an indicator on the (i, j) edge channel.
        std::vector<int> flat_idx(pairs.count());
        for (int e = 0; e < pairs.count(); ++e)
          flat_idx[e] = pairs.receivers[e] * n + pairs.senders[e];
        auto col = gather_rows(reshape(x, {n * n, 1}), flat_idx);
        edge_cols.push_back(col);
        edge_ws.push_back(hint_w[k]);
        continue;
      }

      auto contrib = matmul(x, hint_w[k]);
      if (spec.loc == HintLoc::node || spec.type == HintType::node_pointer) {
        h_i = h_i.defined() ? add(h_i, contrib) : contrib;
      } else {
        h_g = h_g.defined() ? add(h_g, contrib) : contrib;
      }
    }
    if (!h_i.defined()) h_i = TensorT<S>::zeros({n, d_h});
    if (!h_g.defined()) h_g = TensorT<S>::zeros({1, d_h});

    std::vector<S> base(pairs.base.begin(), pairs.base.end());
    auto base_t = TensorT<S>::from({pairs.count(), PairList::kBaseChannels}, std::move(base));
    if (edge_cols.empty()) {
      out.edge_in = base_t;
      out.edge_w = adj_w;
    } else {
      std::vector<TensorT<S>> cols{base_t};
      cols.insert(cols.end(), edge_cols.begin(), edge_cols.end());
      out.edge_in = concat_cols(cols);
      std::vector<TensorT<S>> ws{adj_w};
      for (auto& w : edge_ws) ws.push_back(w);
      out.edge_w = concat_rows(ws);
    }
    out.h_i = h_i;
    out.h_g = h_g;
    return out;
  }
};

// Decoded logits per hint, aligned with the spec list. Node categorical
// [n,k]; node scalar/mask [n,1]; node pointer [n,n]; graph pointer rank-1
// [n] (or [n+1] with the none slot last); graph scalar [1,1]; graph
// categorical rank-1 [k]. Input-only hints have undefined entries.
template <class S>
struct DecodedStepT {
  std::vector<TensorT<S>> logits;
};

template <class S>
struct DecoderSetT {
  std::vector<HintSpec> specs;
  int d_h = 0;

  // Shared trunk over [p_i | pooled] feeding all graph-pointer heads.
  LinearT<S> ptr_trunk;
  TensorT<S> ptr_head;  // [d_h, #graph pointer hints]
  // Shared trunk over pooled features feeding all graph-located heads
  // (scalars, categoricals, pointer none slots).
  LinearT<S> graph_trunk;
  LinearT<S> graph_head;  // [d_h, total graph outputs]

  // Per node-located hint linear heads.
  std::vector<LinearT<S>> node_heads;
  // Pairwise bilinear pieces for node-located pointer hints.
  std::vector<TensorT<S>> bilinear;  // [d_h, d_h]
  std::vector<TensorT<S>> col_term;  // [d_h, 1]

  std::vector<int> ptr_slot;    // graph-pointer column in ptr_head, else -1
  std::vector<int> graph_slot;  // first column in graph_head, else -1
  std::vector<int> none_slot;   // none-logit column in graph_head, else -1
  int graph_outputs = 0;

  void build(const std::vector<HintSpec>& hint_specs, int width, Rng& rng,
             ParamRegistryT<S>& reg) {
    specs = hint_specs;
    d_h = width;
    node_heads.resize(specs.size());
    bilinear.resize(specs.size());
    col_term.resize(specs.size());
    ptr_slot.assign(specs.size(), -1);
    graph_slot.assign(specs.size(), -1);
    none_slot.assign(specs.size(), -1);

    int n_ptr = 0;
    graph_outputs = 0;
    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      if (spec.role != HintRole::hint) continue;
      if (spec.loc == HintLoc::graph) {
        if (spec.type == HintType::node_pointer) {
          ptr_slot[k] = n_ptr++;
          if (spec.none_slot) {
            none_slot[k] = graph_outputs;
            graph_outputs += 1;
          }
        } else {
          graph_slot[k] = graph_outputs;
          graph_outputs += spec.type == HintType::categorical ? spec.categories : 1;
        }
      }
    }

    if (n_ptr > 0) {
      ptr_trunk = make_linear(reg, "dec.ptr_trunk", 2 * d_h, d_h, rng);
      ptr_head = reg.add("dec.ptr_head.W", TensorT<S>::glorot(d_h, n_ptr, rng));
    }
    if (graph_outputs > 0) {
      graph_trunk = make_linear(reg, "dec.graph_trunk", d_h, d_h, rng);
      graph_head = make_linear(reg, "dec.graph_head", d_h, graph_outputs, rng);
    }
    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      if (spec.role != HintRole::hint || spec.loc != HintLoc::node) continue;
      if (spec.type == HintType::node_pointer) {
        bilinear[k] = reg.add("dec." + spec.name + ".bilinear", TensorT<S>::glorot(d_h, d_h, rng));
        col_term[k] = reg.add("dec." + spec.name + ".col", TensorT<S>::glorot(d_h, 1, rng));
      } else {
        const int outs = spec.type == HintType::categorical ? spec.categories : 1;
        node_heads[k] = make_linear(reg, "dec." + spec.name, d_h, outs, rng);
      }
    }
  }

  DecodedStepT<S> decode(const TensorT<S>& p_i, const TensorT<S>& pooled) const {
    const int n = p_i.dim(0);
    DecodedStepT<S> out;
    out.logits.resize(specs.size());

    TensorT<S> ptr_logits;  // [n, n_ptr]
    if (ptr_head.defined()) {
      auto trunk_in = concat_cols<S>({p_i, broadcast_rows(pooled, n)});
      ptr_logits = matmul(relu(ptr_trunk(trunk_in)), ptr_head);
    }
    TensorT<S> graph_out;  // [1, graph_outputs]
    if (graph_outputs > 0) graph_out = graph_head(relu(graph_trunk(pooled)));

    for (size_t k = 0; k < specs.size(); ++k) {
      const auto& spec = specs[k];
      if (spec.role != HintRole::hint) continue;
      if (spec.loc == HintLoc::graph) {
        if (spec.type == HintType::node_pointer) {
          auto per_node = reshape(slice_cols(ptr_logits, ptr_slot[k], ptr_slot[k] + 1), {n});
          if (spec.none_slot) {
            auto none = reshape(slice_cols(graph_out, none_slot[k], none_slot[k] + 1), {1});
            out.logits[k] = concat_rows<S>({reshape(per_node, {n, 1}), reshape(none, {1, 1})});
            out.logits[k] = reshape(out.logits[k], {n + 1});
          } else {
            out.logits[k] = per_node;
          }
        } else {
          const int outs = spec.type == HintType::categorical ? spec.categories : 1;
          auto piece = slice_cols(graph_out, graph_slot[k], graph_slot[k] + outs);
          out.logits[k] = spec.type == HintType::categorical ? reshape(piece, {outs}) : piece;
        }
      } else {
        if (spec.type == HintType::node_pointer) {
          auto scores = matmul(matmul(p_i, bilinear[k]), transpose(p_i));
          auto col = broadcast_rows(transpose(matmul(p_i, col_term[k])), n);
          out.logits[k] = add(scores, col);
        } else {
          out.logits[k] = node_heads[k](p_i);
        }
      }
    }
    return out;
  }
};

// Final-step output decoder (pairwise predecessor scores), used when output
// collection is disabled.
template <class S>
struct OutputHeadT {
  TensorT<S> bilinear;  // [d_h, d_h]
  TensorT<S> col_term;  // [d_h, 1]

  void build(int d_h, Rng& rng, ParamRegistryT<S>& reg) {
    bilinear = reg.add("out.bilinear", TensorT<S>::glorot(d_h, d_h, rng));
    col_term = reg.add("out.col", TensorT<S>::glorot(d_h, 1, rng));
  }
  bool defined() const { return bilinear.defined(); }

  // Row i gives logits over candidate predecessors of node i.
  TensorT<S> operator()(const TensorT<S>& p_i) const {
    const int n = p_i.dim(0);
    auto scores = matmul(matmul(p_i, bilinear), transpose(p_i));
    auto col = broadcast_rows(transpose(matmul(p_i, col_term)), n);
    return add(scores, col);
  }
};

// Per-hint losses: categorical and pointer hints use softmax cross-entropy,
// scalars squared error, masks elementwise binary cross-entropy.
template <class S>
struct HintLossT {
  TensorT<S> total;                   // scalar tensor (sum over hints)
  std::vector<double> per_hint;       // aligned with specs; 0 for input-only
};

template <class S>
HintLossT<S> hint_loss(const std::vector<HintSpec>& specs, const DecodedStepT<S>& decoded,
                       const StepTargetsT<S>& targets) {
  HintLossT<S> out;
  out.per_hint.assign(specs.size(), 0.0);
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    if (spec.role != HintRole::hint) continue;
    const auto& logits = decoded.logits[k];
    TensorT<S> loss;
    switch (spec.type) {
      case HintType::categorical:
        loss = spec.loc == HintLoc::graph
                   ? softmax_cross_entropy(logits, targets.indices[k][0])
                   : softmax_xent_rows(logits, targets.indices[k]);
        break;
      case HintType::node_pointer:
        loss = spec.loc == HintLoc::graph
                   ? softmax_cross_entropy(logits, targets.indices[k][0])
                   : softmax_xent_rows(logits, targets.indices[k]);
        break;
      case HintType::scalar:
        loss = mse_loss(reshape(logits, {static_cast<int>(logits.size())}), targets.values[k]);
        break;
      case HintType::mask:
        loss = bce_with_logits(reshape(logits, {static_cast<int>(logits.size())}),
                               targets.values[k]);
        break;
    }
    out.per_hint[k] = static_cast<double>(loss.scalar_value());
    out.total = out.total.defined() ? add(out.total, loss) : loss;
  }
  if (!out.total.defined()) out.total = TensorT<S>::zeros({1});
  return out;
}

}  // namespace nar
