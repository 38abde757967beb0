#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nar/tensor.hpp"

namespace nar {

// Ordered, named registry of learnable tensors. Construction order is fixed
// by the module build sequence, so checkpoints and Adam state align by index.
template <class S>
struct ParamRegistryT {
  std::vector<std::string> names;
  std::vector<TensorT<S>> tensors;

  TensorT<S> add(const std::string& name, TensorT<S> t) {
    names.push_back(name);
    tensors.push_back(t);
    return t;
  }
};

template <class S>
struct LinearT {
  TensorT<S> W;  // [in, out]
  TensorT<S> b;  // [out] or undefined

  TensorT<S> operator()(const TensorT<S>& x) const {
    auto y = matmul(x, W);
    if (b.defined()) y = add(y, broadcast_rows(b, y.dim(0)));
    return y;
  }
};

template <class S>
LinearT<S> make_linear(ParamRegistryT<S>& reg, const std::string& name, int in, int out, Rng& rng,
                       bool bias = true) {
  LinearT<S> l;
  l.W = reg.add(name + ".W", TensorT<S>::glorot(in, out, rng));
  if (bias) l.b = reg.add(name + ".b", TensorT<S>::zeros({out}, true));
  return l;
}

// Two linear layers with a ReLU between (one hidden layer).
template <class S>
struct MlpT {
  LinearT<S> l1, l2;

  TensorT<S> operator()(const TensorT<S>& x) const { return l2(relu(l1(x))); }
};

template <class S>
MlpT<S> make_mlp(ParamRegistryT<S>& reg, const std::string& name, int in, int hidden, int out,
                 Rng& rng) {
  MlpT<S> m;
  m.l1 = make_linear(reg, name + ".l1", in, hidden, rng);
  m.l2 = make_linear(reg, name + ".l2", hidden, out, rng);
  return m;
}

}  // namespace nar
