#pragma once

// Full model assembly: hint encoders, processor, hint decoders, stack value
// network, and the optional final-step output head, with an ordered named
// parameter registry for the optimizer and checkpoints.

#include <optional>
#include <string>
#include <vector>

#include "nar/encdec.hpp"
#include "nar/processor.hpp"
#include "nar/stack.hpp"

namespace nar {

struct ModelConfig {
  HintScheme scheme = HintScheme::recursive;
  StackMode stack_mode = StackMode::none;
  bool use_hidden_state = false;
  bool use_output_collection = true;
  ProcessorConfig processor;
  ValueNetConfig value_net;
  uint64_t init_seed = 1;
  std::vector<HintSpec> specs;  // filled from the scheme when empty

  void validate() const {
    if (stack_mode != StackMode::none && scheme != HintScheme::recursive)
      throw InvalidInput("model: a stack requires the recursive hint scheme (stack_op hint)");
    if (stack_mode != StackMode::none && processor.d_h < 1)
      throw InvalidInput("model: d_h must be positive");
    if (value_net.kind == ValueKind::slice && stack_mode != StackMode::none &&
        processor.d_h < value_net.d_stack)
      throw InvalidInput("model: sliced value function requires d_h >= d_stack");
  }
};

template <class S>
struct ModelT {
  ModelConfig cfg;
  std::vector<HintSpec> specs;
  EncoderSetT<S> encoder;
  DecoderSetT<S> decoder;
  ProcessorT<S> processor;
  ValueNetT<S> value_net;
  OutputHeadT<S> output_head;
  ParamRegistryT<S> params;

  static ModelT build(ModelConfig config) {
    config.validate();
    ModelT m;
    m.cfg = config;
    m.specs = config.specs.empty() ? hint_scheme_specs(config.scheme) : config.specs;
    Rng rng(Rng::derive(config.init_seed, 0x10d31));

    const int d = config.processor.d_h;
    m.encoder.build(m.specs, d, rng, m.params);

    int x_width = d;
    if (config.stack_mode == StackMode::node_wise) x_width += config.value_net.d_stack;
    if (config.use_hidden_state) x_width += d;
    int g_width = d;
    if (config.stack_mode == StackMode::graph_level) g_width += config.value_net.d_stack;

    ProcessorConfig pc = config.processor;
    pc.use_hidden_state = config.use_hidden_state;
    m.processor.build(pc, x_width, g_width, rng, m.params);
    m.decoder.build(m.specs, d, rng, m.params);
    m.value_net.build(config.value_net, config.stack_mode, d, rng, m.params);
    if (!config.use_output_collection) m.output_head.build(d, rng, m.params);
    return m;
  }

  int d_h() const { return cfg.processor.d_h; }

  void zero_grads() {
    for (auto& p : params.tensors) p.zero_grad();
  }

  struct StepOut {
    EncodedStepT<S> encoded;
    TensorT<S> p_i;     // [n, d_h]
    TensorT<S> p_ij;    // [pairs, d_h]
    TensorT<S> pooled;  // [1, d_h] sum over nodes of p_i
    DecodedStepT<S> decoded;
  };

  // One full step: encode -> process -> decode. stack_top is required when a
  // stack is configured; p_prev is required exactly when the recurrent hidden
  // state is enabled.
  StepOut step(const StepInputsT<S>& inputs, const PairList& pairs,
               const TensorT<S>* stack_top, const TensorT<S>* p_prev) const {
    if (cfg.use_hidden_state && p_prev == nullptr)
      throw InvalidInput("model: hidden state enabled but p_prev missing");
    if (!cfg.use_hidden_state && p_prev != nullptr)
      throw InvalidInput("model: hidden state disabled but p_prev supplied");
    if (cfg.stack_mode != StackMode::none && stack_top == nullptr)
      throw InvalidInput("model: stack configured but stack top missing");

    StepOut out;
    out.encoded = encoder.encode(inputs, pairs);

    TensorT<S> x = out.encoded.h_i;
    TensorT<S> h_g = out.encoded.h_g;
    if (cfg.stack_mode == StackMode::node_wise) {
      x = concat_cols<S>({x, *stack_top});
    } else if (cfg.stack_mode == StackMode::graph_level) {
      h_g = concat_cols<S>({h_g, *stack_top});
    }
    if (cfg.use_hidden_state) x = concat_cols<S>({x, *p_prev});

    auto [p_i, p_ij] = processor(x, h_g, out.encoded, pairs);
    out.p_i = p_i;
    out.p_ij = p_ij;
    out.pooled = reshape(reduce(p_i, 0, Reduce::sum), {1, d_h()});
    out.decoded = decoder.decode(p_i, out.pooled);
    return out;
  }
};

using Model = ModelT<float>;

}  // namespace nar
