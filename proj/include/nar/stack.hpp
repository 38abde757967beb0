#pragma once

// Latent call stacks. A node-wise stack holds one frame row per node; a
// graph-level stack holds a single pooled frame. All frames share one depth
// pointer. Frame 0 is the all-zero frame and popping at depth 0 stays at the
// zero frame. During training, pushed frames stay connected to the tape, so a
// loss at the step that reads a frame backpropagates directly into the step
// that pushed it.

#include <vector>

#include "nar/layers.hpp"
#include "nar/oracle.hpp"
#include "nar/tensor.hpp"

namespace nar {

enum class StackMode : int { none = 0, graph_level = 1, node_wise = 2 };

enum class ValueKind : int { mlp = 0, slice = 1, attention = 2 };

struct ValueNetConfig {
  ValueKind kind = ValueKind::mlp;
  int d_stack = 64;
  int hidden = 128;
  bool mean_pool = false;  // attention variant: mean- instead of sum-pooling
};

// φ_value (and φ_att for the attention variant): maps processed node features
// to stack frames. The slice variant takes the first d_stack channels and
// requires d_h >= d_stack.
template <class S>
struct ValueNetT {
  ValueNetConfig cfg;
  int d_h = 0;
  MlpT<S> value_mlp;
  MlpT<S> att_mlp;

  void build(const ValueNetConfig& config, StackMode mode, int width, Rng& rng,
             ParamRegistryT<S>& reg) {
    cfg = config;
    d_h = width;
    if (cfg.kind == ValueKind::slice && d_h < cfg.d_stack)
      throw InvalidInput("value net: slice variant requires d_h >= d_stack");
    if (cfg.kind == ValueKind::attention && mode == StackMode::node_wise)
      throw InvalidInput("value net: attention pooling applies to the graph-level stack only");
    if (mode == StackMode::none) return;
    if (cfg.kind != ValueKind::slice)
      value_mlp = make_mlp(reg, "stack.value", d_h, cfg.hidden, cfg.d_stack, rng);
    if (cfg.kind == ValueKind::attention)
      att_mlp = make_mlp(reg, "stack.att", 2 * d_h, cfg.hidden, 1, rng);
  }

  TensorT<S> frame_values(const TensorT<S>& p_i) const {
    if (cfg.kind == ValueKind::slice) return slice_cols(p_i, 0, cfg.d_stack);
    return value_mlp(p_i);
  }

  // Node-wise frame: [n, d_stack].
  TensorT<S> node_frame(const TensorT<S>& p_i) const { return frame_values(p_i); }

  // Graph frame: [1, d_stack], sum-pooled (optionally attention-weighted).
  TensorT<S> graph_frame(const TensorT<S>& p_i, const TensorT<S>& h_g) const {
    const int n = p_i.dim(0);
    auto values = frame_values(p_i);
    if (cfg.kind == ValueKind::attention) {
      auto weights = att_mlp(concat_cols<S>({p_i, broadcast_rows(h_g, n)}));
      values = scale_rows(values, reshape(weights, {n}));
      if (cfg.mean_pool) values = scale(values, S(1) / S(n));
    }
    return reshape(reduce(values, 0, Reduce::sum), {1, cfg.d_stack});
  }
};

template <class S>
class LatentStackT {
 public:
  LatentStackT() = default;
  LatentStackT(StackMode mode, int n, int d_stack) : mode_(mode), n_(n), d_stack_(d_stack) {
    if (mode_ == StackMode::none) return;
    frames_.push_back(mode_ == StackMode::node_wise ? TensorT<S>::zeros({n, d_stack})
                                                    : TensorT<S>::zeros({1, d_stack}));
  }

  StackMode mode() const { return mode_; }
  int depth() const { return q_; }

  const TensorT<S>& top() const { return frames_[q_]; }

  // push: depth+1 with the new frame on top; pop: depth = max(depth-1, 0),
  // the previously pushed frame becomes the top again; noop: unchanged.
  void apply(StackOp op, TensorT<S> new_frame = {}) {
    switch (op) {
      case StackOp::push:
        if (!new_frame.defined()) throw InvalidInput("stack: push requires a frame");
        frames_.resize(static_cast<size_t>(q_) + 1);
        frames_.push_back(std::move(new_frame));
        ++q_;
        break;
      case StackOp::pop:
        q_ = std::max(q_ - 1, 0);
        break;
      case StackOp::noop:
        break;
    }
  }

 private:
  StackMode mode_ = StackMode::none;
  int n_ = 0;
  int d_stack_ = 0;
  int q_ = 0;
  std::vector<TensorT<S>> frames_;
};

// Applies one stack operation; the frame is computed only on push.
template <class S>
void apply_op(LatentStackT<S>& stack, StackOp op, const ValueNetT<S>& value_net,
              const TensorT<S>& p_i, const TensorT<S>& h_g) {
  if (stack.mode() == StackMode::none) return;
  if (op == StackOp::push) {
    stack.apply(op, stack.mode() == StackMode::node_wise ? value_net.node_frame(p_i)
                                                         : value_net.graph_frame(p_i, h_g));
  } else {
    stack.apply(op);
  }
}

}  // namespace nar
