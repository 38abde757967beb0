#pragma once

// The processor ψ: one round of message passing per algorithm step. Each
// receiver aggregates messages from its paired senders (max by default, per
// the CLRS MPNN convention) plus a self-message, then an update MLP maps
// [own inputs | aggregate] to the processed node features.
//
// The first message layer is computed in factorized form: the receiver,
// sender, edge, and graph contributions are projected separately and summed
// per pair. This is algebraically identical to one linear layer over the
// concatenated inputs and avoids materializing a [pairs, 2x+e+g] matrix.

#include <utility>

#include "nar/encdec.hpp"
#include "nar/layers.hpp"
#include "nar/pairs.hpp"

namespace nar {

enum class Aggregation : int { max = 0, sum = 1 };

struct ProcessorConfig {
  int d_h = 128;
  bool use_hidden_state = false;
  Aggregation aggregation = Aggregation::max;
  Connectivity connectivity = Connectivity::symmetric;
};

template <class S>
struct ProcessorT {
  ProcessorConfig cfg;
  int x_width = 0;  // node input width (h_i plus optional stack top / hidden state)
  int g_width = 0;  // graph input width (h_g plus optional graph stack top)

  TensorT<S> w_recv, w_send, w_graph, b_msg;  // first message layer blocks
  TensorT<S> w_edge;                          // [d_h, d_h], applied to h_ij
  LinearT<S> msg_out;                         // hidden -> d_h
  TensorT<S> w_upd_x, w_upd_m, b_upd;         // first update layer blocks
  LinearT<S> upd_out;                         // hidden -> d_h

  void build(const ProcessorConfig& config, int node_input_width, int graph_input_width, Rng& rng,
             ParamRegistryT<S>& reg) {
    cfg = config;
    x_width = node_input_width;
    g_width = graph_input_width;
    const int d = cfg.d_h;
    w_recv = reg.add("proc.msg.recv.W", TensorT<S>::glorot(x_width, d, rng));
    w_send = reg.add("proc.msg.send.W", TensorT<S>::glorot(x_width, d, rng));
    w_edge = reg.add("proc.msg.edge.W", TensorT<S>::glorot(d, d, rng));
    w_graph = reg.add("proc.msg.graph.W", TensorT<S>::glorot(g_width, d, rng));
    b_msg = reg.add("proc.msg.b", TensorT<S>::zeros({d}, true));
    msg_out = make_linear(reg, "proc.msg.out", d, d, rng);
    w_upd_x = reg.add("proc.upd.x.W", TensorT<S>::glorot(x_width, d, rng));
    w_upd_m = reg.add("proc.upd.m.W", TensorT<S>::glorot(d, d, rng));
    b_upd = reg.add("proc.upd.b", TensorT<S>::zeros({d}, true));
    upd_out = make_linear(reg, "proc.upd.out", d, d, rng);
  }

  // x: [n, x_width] node inputs; h_g: [1, g_width]; edge term from the
  // encoded step. Returns processed node features p_i [n, d_h] and processed
  // edge features p_ij (the messages, [pairs, d_h]).
  std::pair<TensorT<S>, TensorT<S>> operator()(const TensorT<S>& x, const TensorT<S>& h_g,
                                               const EncodedStepT<S>& enc,
                                               const PairList& pairs) const {
    if (x.dim(1) != x_width) throw DimensionError("processor: node input width mismatch");
    if (h_g.dim(1) != g_width) throw DimensionError("processor: graph input width mismatch");
    const int n = x.dim(0);
    const int P = pairs.count();

    auto xa = matmul(x, w_recv);
    auto xb = matmul(x, w_send);
    // h_ij @ w_edge == edge_in @ (edge_w @ w_edge); composing the two small
    // weights first keeps the per-pair matrix at its raw channel width.
    auto edge_term = matmul(enc.edge_in, matmul(enc.edge_w, w_edge));
    auto graph_term = matmul(h_g, w_graph);

    auto pre = add(gather_rows(xa, pairs.receivers), gather_rows(xb, pairs.senders));
    pre = add(pre, edge_term);
    pre = add(pre, broadcast_rows(reshape(graph_term, {cfg.d_h}), P));
    pre = add(pre, broadcast_rows(b_msg, P));
    auto messages = msg_out(relu(pre));

    auto agg = segment_reduce(messages, pairs.receivers, n,
                              cfg.aggregation == Aggregation::max ? Reduce::max : Reduce::sum);

    auto upd_pre = add(add(matmul(x, w_upd_x), matmul(agg, w_upd_m)), broadcast_rows(b_upd, n));
    auto p_i = upd_out(relu(upd_pre));
    return {p_i, messages};
  }
};

}  // namespace nar
