#pragma once

// Dense row-major tensor with define-by-run reverse-mode differentiation.
// The tape is rebuilt on every step; nodes are reference-counted and a
// backward pass optionally releases intermediate buffers as it consumes them.
// Single-threaded by design: one tape per training replica.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <vector>

#include "nar/common.hpp"

namespace nar {

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <class S>
struct NodeT {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;  // sized lazily, same length as value when present
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

}  // namespace detail

// Disables tape recording for the current thread while alive (evaluation mode).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <class S>
class TensorT {
 public:
  using Scalar = S;
  using Node = detail::NodeT<S>;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }
  static TensorT filled(std::vector<int> shape, S v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(count(n->shape), v);
    n->requires_grad = requires_grad && grad_enabled();
    if (n->requires_grad) n->ensure_grad();
    return TensorT(std::move(n));
  }
  static TensorT scalar(S v) { return from({1}, {v}); }
  static TensorT from(std::vector<int> shape, std::vector<S> data, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    if (count(shape) != static_cast<int64_t>(data.size()))
      throw DimensionError("tensor: data length does not match shape");
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad && grad_enabled();
    if (n->requires_grad) n->ensure_grad();
    return TensorT(std::move(n));
  }
  static TensorT uniform(std::vector<int> shape, Rng& rng, double lo, double hi,
                         bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->value) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }
  // Glorot/Xavier uniform for a [fan_in, fan_out] weight matrix.
  static TensorT glorot(int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    return uniform({fan_in, fan_out}, rng, -limit, limit, true);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[i]; }
  int64_t size() const { return node_->size(); }
  int rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
  int cols() const { return rank() >= 2 ? node_->shape[1] : 1; }

  const std::vector<S>& values() const { return node_->value; }
  std::vector<S>& mutable_values() { return node_->value; }
  S value_at(int64_t i) const { return node_->value[i]; }
  S at(int r, int c) const { return node_->value[static_cast<int64_t>(r) * cols() + c]; }
  S scalar_value() const {
    if (size() != 1) throw InvalidInput("scalar_value: tensor is not a scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<S>& grad() const { return node_->grad; }
  std::vector<S>& mutable_grad() { return node_->grad; }
  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), S(0));
  }
  bool is_leaf() const { return node_->leaf; }

  std::shared_ptr<Node> node() const { return node_; }

  static int64_t count(const std::vector<int>& shape) {
    int64_t c = 1;
    for (int d : shape) {
      if (d < 0) throw DimensionError("tensor: negative extent");
      c *= d;
    }
    return c;
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EMap = Eigen::Map<EMat<S>>;
template <class S>
using ECMap = Eigen::Map<const EMat<S>>;

template <class S>
TensorT<S> make_result(std::vector<int> shape, std::vector<S> value,
                       std::vector<TensorT<S>> inputs,
                       std::function<void(NodeT<S>&)> backward_fn) {
  auto n = std::make_shared<NodeT<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (grad_mode_flag()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  n->requires_grad = needs;
  n->leaf = false;
  if (needs) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(backward_fn);
  }
  return TensorT<S>(std::move(n));
}

template <class S>
void require_rank2(const TensorT<S>& t, const char* who) {
  if (t.rank() != 2) throw DimensionError(std::string(who) + ": rank-2 tensor required");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) throw DimensionError("matmul: inner dimensions disagree");
  std::vector<S> out(static_cast<size_t>(m) * n);
  {
    detail::ECMap<S> A(a.values().data(), m, k), B(b.values().data(), k, n);
    detail::EMap<S> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::NodeT<S>& self) {
        detail::ECMap<S> G(self.grad.data(), m, n);
        if (an->requires_grad) {
          an->ensure_grad();
          detail::ECMap<S> B(bn->value.data(), k, n);
          detail::EMap<S> GA(an->grad.data(), m, k);
          GA.noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::ECMap<S> A(an->value.data(), m, k);
          detail::EMap<S> GB(bn->grad.data(), k, n);
          GB.noalias() += A.transpose() * G;
        }
      });
}

template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
  detail::require_rank2(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<S> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = a.values()[static_cast<size_t>(i) * n + j];
  auto an = a.node();
  return detail::make_result<S>({n, m}, std::move(out), {a}, [an, m, n](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        an->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
  });
}

// out = a + alpha * b, shapes must match exactly.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b, S alpha = S(1)) {
  if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch");
  std::vector<S> out(a.values());
  for (int64_t i = 0; i < a.size(); ++i) out[i] += alpha * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn, alpha](detail::NodeT<S>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += alpha * self.grad[i];
    }
  });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  return add(a, b, S(-1));
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  std::vector<S> out(a.values());
  for (auto& v : out) v *= c;
  auto an = a.node();
  return detail::make_result<S>(a.shape(), std::move(out), {a}, [an, c](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
}

// Elementwise (Hadamard) product, same shape.
template <class S>
TensorT<S> multiply(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape()) throw DimensionError("multiply: shape mismatch");
  std::vector<S> out(a.values());
  for (int64_t i = 0; i < a.size(); ++i) out[i] *= b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn](detail::NodeT<S>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

// Row-wise scaling: M[m,n] scaled by c (shape [m] or [m,1]).
template <class S>
TensorT<S> scale_rows(const TensorT<S>& m, const TensorT<S>& c) {
  detail::require_rank2(m, "scale_rows");
  if (c.size() != m.dim(0)) throw DimensionError("scale_rows: scale length must equal row count");
  const int R = m.dim(0), C = m.dim(1);
  std::vector<S> out(m.values());
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) out[static_cast<size_t>(i) * C + j] *= c.values()[i];
  auto mn = m.node();
  auto cn = c.node();
  return detail::make_result<S>(m.shape(), std::move(out), {m, c}, [mn, cn, R, C](detail::NodeT<S>& self) {
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
          mn->grad[static_cast<size_t>(i) * C + j] += self.grad[static_cast<size_t>(i) * C + j] * cn->value[i];
    }
    if (cn->requires_grad) {
      cn->ensure_grad();
      for (int i = 0; i < R; ++i) {
        S acc = 0;
        for (int j = 0; j < C; ++j)
          acc += self.grad[static_cast<size_t>(i) * C + j] * mn->value[static_cast<size_t>(i) * C + j];
        cn->grad[i] += acc;
      }
    }
  });
}

// Repeats a row vector ([n] or [1,n]) into an [m,n] matrix.
template <class S>
TensorT<S> broadcast_rows(const TensorT<S>& v, int m) {
  const int n = static_cast<int>(v.size());
  if (v.rank() == 2 && v.dim(0) != 1) throw DimensionError("broadcast_rows: expected a row vector");
  std::vector<S> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    std::copy(v.values().begin(), v.values().end(), out.begin() + static_cast<size_t>(i) * n);
  auto vn = v.node();
  return detail::make_result<S>({m, n}, std::move(out), {v}, [vn, m, n](detail::NodeT<S>& self) {
    if (!vn->requires_grad) return;
    vn->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) vn->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
  });
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, std::vector<int> shape) {
  if (TensorT<S>::count(shape) != a.size()) throw DimensionError("reshape: element count mismatch");
  std::vector<S> out(a.values());
  auto an = a.node();
  return detail::make_result<S>(std::move(shape), std::move(out), {a}, [an](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  std::vector<S> out(a.values());
  for (auto& v : out) v = v > S(0) ? v : S(0);
  auto an = a.node();
  return detail::make_result<S>(a.shape(), std::move(out), {a}, [an](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    // Subgradient at 0 is 0.
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (an->value[i] > S(0)) an->grad[i] += self.grad[i];
  });
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  std::vector<S> out(a.values());
  for (auto& v : out) {
    if (v >= S(0)) {
      v = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      v = e / (S(1) + e);
    }
  }
  auto an = a.node();
  auto self_values = out;  // captured copy; backward uses sigmoid outputs
  return detail::make_result<S>(a.shape(), std::move(out), {a},
                                [an, sv = std::move(self_values)](detail::NodeT<S>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                    an->grad[i] += self.grad[i] * sv[i] * (S(1) - sv[i]);
                                });
}

// Row-wise softmax; rank-1 input is treated as a single row.
template <class S>
TensorT<S> softmax_rows(const TensorT<S>& a) {
  const int R = a.rank() == 2 ? a.dim(0) : 1;
  const int C = a.rank() == 2 ? a.dim(1) : static_cast<int>(a.size());
  std::vector<S> out(a.values());
  for (int i = 0; i < R; ++i) {
    S* row = out.data() + static_cast<size_t>(i) * C;
    S mx = row[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (int j = 0; j < C; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < C; ++j) row[j] /= sum;
  }
  auto an = a.node();
  auto sv = out;
  return detail::make_result<S>(a.shape(), std::move(out), {a},
                                [an, sv = std::move(sv), R, C](detail::NodeT<S>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (int i = 0; i < R; ++i) {
                                    const S* s = sv.data() + static_cast<size_t>(i) * C;
                                    const S* g = self.grad.data() + static_cast<size_t>(i) * C;
                                    S dot = 0;
                                    for (int j = 0; j < C; ++j) dot += s[j] * g[j];
                                    S* out_g = an->grad.data() + static_cast<size_t>(i) * C;
                                    for (int j = 0; j < C; ++j) out_g[j] += s[j] * (g[j] - dot);
                                  }
                                });
}

template <class S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const int R = parts[0].dim(0);
  int C = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.dim(0) != R) throw DimensionError("concat_cols: row count mismatch");
    C += p.dim(1);
  }
  std::vector<S> out(static_cast<size_t>(R) * C);
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    for (int i = 0; i < R; ++i)
      std::copy(p.values().begin() + static_cast<size_t>(i) * pc,
                p.values().begin() + static_cast<size_t>(i + 1) * pc,
                out.begin() + static_cast<size_t>(i) * C + off);
    off += pc;
  }
  std::vector<std::shared_ptr<detail::NodeT<S>>> nodes;
  std::vector<int> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  return detail::make_result<S>({R, C}, std::move(out), parts,
                                [nodes, widths, R, C](detail::NodeT<S>& self) {
                                  int off2 = 0;
                                  for (size_t k = 0; k < nodes.size(); ++k) {
                                    const int pc = widths[k];
                                    if (nodes[k]->requires_grad) {
                                      nodes[k]->ensure_grad();
                                      for (int i = 0; i < R; ++i)
                                        for (int j = 0; j < pc; ++j)
                                          nodes[k]->grad[static_cast<size_t>(i) * pc + j] +=
                                              self.grad[static_cast<size_t>(i) * C + off2 + j];
                                    }
                                    off2 += pc;
                                  }
                                });
}

template <class S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no inputs");
  const int C = parts[0].cols();
  int R = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.dim(1) != C) throw DimensionError("concat_rows: column count mismatch");
    R += p.dim(0);
  }
  std::vector<S> out;
  out.reserve(static_cast<size_t>(R) * C);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<std::shared_ptr<detail::NodeT<S>>> nodes;
  std::vector<int> heights;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    heights.push_back(p.dim(0));
  }
  return detail::make_result<S>({R, C}, std::move(out), parts,
                                [nodes, heights, C](detail::NodeT<S>& self) {
                                  size_t off = 0;
                                  for (size_t k = 0; k < nodes.size(); ++k) {
                                    const size_t cnt = static_cast<size_t>(heights[k]) * C;
                                    if (nodes[k]->requires_grad) {
                                      nodes[k]->ensure_grad();
                                      for (size_t i = 0; i < cnt; ++i) nodes[k]->grad[i] += self.grad[off + i];
                                    }
                                    off += cnt;
                                  }
                                });
}

// Columns [c0, c1) of a rank-2 tensor.
template <class S>
TensorT<S> slice_cols(const TensorT<S>& a, int c0, int c1) {
  detail::require_rank2(a, "slice_cols");
  const int R = a.dim(0), C = a.dim(1);
  if (c0 < 0 || c1 > C || c0 >= c1) throw DimensionError("slice_cols: bad range");
  const int W = c1 - c0;
  std::vector<S> out(static_cast<size_t>(R) * W);
  for (int i = 0; i < R; ++i)
    std::copy(a.values().begin() + static_cast<size_t>(i) * C + c0,
              a.values().begin() + static_cast<size_t>(i) * C + c1,
              out.begin() + static_cast<size_t>(i) * W);
  auto an = a.node();
  return detail::make_result<S>({R, W}, std::move(out), {a}, [an, R, C, c0, W](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < W; ++j)
        an->grad[static_cast<size_t>(i) * C + c0 + j] += self.grad[static_cast<size_t>(i) * W + j];
  });
}

// Elements [i0, i1) of a rank-1 tensor.
template <class S>
TensorT<S> slice(const TensorT<S>& a, int i0, int i1) {
  if (a.rank() != 1) throw DimensionError("slice: rank-1 tensor required");
  if (i0 < 0 || i1 > a.dim(0) || i0 >= i1) throw DimensionError("slice: bad range");
  std::vector<S> out(a.values().begin() + i0, a.values().begin() + i1);
  auto an = a.node();
  return detail::make_result<S>({i1 - i0}, std::move(out), {a}, [an, i0](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i0 + i] += self.grad[i];
  });
}

template <class S>
TensorT<S> gather_rows(const TensorT<S>& a, std::vector<int> idx) {
  detail::require_rank2(a, "gather_rows");
  const int R = a.dim(0), C = a.dim(1);
  for (int i : idx)
    if (i < 0 || i >= R) throw DimensionError("gather_rows: index out of range");
  std::vector<S> out(idx.size() * static_cast<size_t>(C));
  for (size_t k = 0; k < idx.size(); ++k)
    std::copy(a.values().begin() + static_cast<size_t>(idx[k]) * C,
              a.values().begin() + static_cast<size_t>(idx[k] + 1) * C,
              out.begin() + k * C);
  auto an = a.node();
  return detail::make_result<S>({static_cast<int>(idx.size()), C}, std::move(out), {a},
                                [an, idx = std::move(idx), C](detail::NodeT<S>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t k = 0; k < idx.size(); ++k)
                                    for (int j = 0; j < C; ++j)
                                      an->grad[static_cast<size_t>(idx[k]) * C + j] +=
                                          self.grad[k * C + j];
                                });
}

// Selects rank-1 elements where mask is nonzero.
template <class S>
TensorT<S> mask_select(const TensorT<S>& a, const std::vector<uint8_t>& mask) {
  if (a.rank() != 1 || static_cast<int64_t>(mask.size()) != a.size())
    throw DimensionError("mask_select: rank-1 tensor and mask of equal length required");
  std::vector<int> idx;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<int>(i));
  std::vector<S> out(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out[k] = a.values()[idx[k]];
  auto an = a.node();
  return detail::make_result<S>({static_cast<int>(idx.size())}, std::move(out), {a},
                                [an, idx = std::move(idx)](detail::NodeT<S>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t k = 0; k < idx.size(); ++k) an->grad[idx[k]] += self.grad[k];
                                });
}

enum class Reduce { sum, max, mean };

// Reduction along an axis of a rank-2 tensor (axis 0 -> [cols], axis 1 -> [rows]).
// Sum/mean accumulate left to right over index order; max breaks ties toward the
// lowest index and routes the gradient to the argmax element.
template <class S>
TensorT<S> reduce(const TensorT<S>& a, int axis, Reduce kind) {
  detail::require_rank2(a, "reduce");
  if (axis != 0 && axis != 1) throw DimensionError("reduce: axis must be 0 or 1");
  const int R = a.dim(0), C = a.dim(1);
  const int out_n = axis == 0 ? C : R;
  const int span = axis == 0 ? R : C;
  std::vector<S> out(out_n);
  std::vector<int> arg(kind == Reduce::max ? out_n : 0);
  auto fetch = [&](int o, int k) {
    return axis == 0 ? a.values()[static_cast<size_t>(k) * C + o]
                     : a.values()[static_cast<size_t>(o) * C + k];
  };
  for (int o = 0; o < out_n; ++o) {
    if (kind == Reduce::max) {
      S best = fetch(o, 0);
      int bi = 0;
      for (int k = 1; k < span; ++k) {
        const S v = fetch(o, k);
        if (v > best) {
          best = v;
          bi = k;
        }
      }
      out[o] = best;
      arg[o] = bi;
    } else {
      S acc = 0;
      for (int k = 0; k < span; ++k) acc += fetch(o, k);
      out[o] = kind == Reduce::mean ? acc / S(span) : acc;
    }
  }
  auto an = a.node();
  return detail::make_result<S>(
      {out_n}, std::move(out), {a},
      [an, axis, kind, R, C, out_n, span, arg = std::move(arg)](detail::NodeT<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        auto slot = [&](int o, int k) -> S& {
          return axis == 0 ? an->grad[static_cast<size_t>(k) * C + o]
                           : an->grad[static_cast<size_t>(o) * C + k];
        };
        for (int o = 0; o < out_n; ++o) {
          if (kind == Reduce::max) {
            slot(o, arg[o]) += self.grad[o];
          } else {
            const S g = kind == Reduce::mean ? self.grad[o] / S(span) : self.grad[o];
            for (int k = 0; k < span; ++k) slot(o, k) += g;
          }
        }
      });
}

// Full reduction to a scalar (left-to-right over flattened index order).
template <class S>
TensorT<S> reduce_all(const TensorT<S>& a, Reduce kind) {
  const int64_t n = a.size();
  if (n == 0) throw InvalidInput("reduce_all: empty tensor");
  S acc;
  int arg = 0;
  if (kind == Reduce::max) {
    acc = a.values()[0];
    for (int64_t i = 1; i < n; ++i)
      if (a.values()[i] > acc) {
        acc = a.values()[i];
        arg = static_cast<int>(i);
      }
  } else {
    acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += a.values()[i];
    if (kind == Reduce::mean) acc /= S(n);
  }
  auto an = a.node();
  return detail::make_result<S>({1}, {acc}, {a}, [an, kind, n, arg](detail::NodeT<S>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    if (kind == Reduce::max) {
      an->grad[arg] += self.grad[0];
    } else {
      const S g = kind == Reduce::mean ? self.grad[0] / S(n) : self.grad[0];
      for (int64_t i = 0; i < n; ++i) an->grad[i] += g;
    }
  });
}

// Order-canonicalized sum: values are sorted ascending before accumulation, so
// the result is bit-identical under any permutation of the reduced axis.
template <class S>
TensorT<S> reduce_sum_canonical(const TensorT<S>& a, int axis) {
  detail::require_rank2(a, "reduce_sum_canonical");
  const int R = a.dim(0), C = a.dim(1);
  const int out_n = axis == 0 ? C : R;
  const int span = axis == 0 ? R : C;
  std::vector<S> out(out_n);
  std::vector<S> fiber(span);
  for (int o = 0; o < out_n; ++o) {
    for (int k = 0; k < span; ++k)
      fiber[k] = axis == 0 ? a.values()[static_cast<size_t>(k) * C + o]
                           : a.values()[static_cast<size_t>(o) * C + k];
    std::sort(fiber.begin(), fiber.end());
    S acc = 0;
    for (int k = 0; k < span; ++k) acc += fiber[k];
    out[o] = acc;
  }
  auto an = a.node();
  return detail::make_result<S>({out_n}, std::move(out), {a},
                                [an, axis, C, out_n, span](detail::NodeT<S>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (int o = 0; o < out_n; ++o)
                                    for (int k = 0; k < span; ++k) {
                                      S& g = axis == 0 ? an->grad[static_cast<size_t>(k) * C + o]
                                                       : an->grad[static_cast<size_t>(o) * C + k];
                                      g += self.grad[o];
                                    }
                                });
}

// Segment reduction of x[E, d] into out[n_segments, d] grouped by seg[e].
// Rows are visited in index order; empty segments yield zero rows.
template <class S>
TensorT<S> segment_reduce(const TensorT<S>& x, const std::vector<int>& seg, int n_segments,
                          Reduce kind) {
  detail::require_rank2(x, "segment_reduce");
  const int E = x.dim(0), D = x.dim(1);
  if (static_cast<int>(seg.size()) != E) throw DimensionError("segment_reduce: segment id count mismatch");
  for (int s : seg)
    if (s < 0 || s >= n_segments) throw DimensionError("segment_reduce: segment id out of range");
  if (kind == Reduce::mean) throw InvalidInput("segment_reduce: mean not supported");
  std::vector<S> out(static_cast<size_t>(n_segments) * D, S(0));
  std::vector<int> arg;
  if (kind == Reduce::max) {
    arg.assign(static_cast<size_t>(n_segments) * D, -1);
    for (int e = 0; e < E; ++e) {
      const int s = seg[e];
      for (int j = 0; j < D; ++j) {
        const S v = x.values()[static_cast<size_t>(e) * D + j];
        auto& slot = arg[static_cast<size_t>(s) * D + j];
        if (slot < 0 || v > out[static_cast<size_t>(s) * D + j]) {
          out[static_cast<size_t>(s) * D + j] = v;
          slot = e;
        }
      }
    }
  } else {
    for (int e = 0; e < E; ++e) {
      const int s = seg[e];
      for (int j = 0; j < D; ++j)
        out[static_cast<size_t>(s) * D + j] += x.values()[static_cast<size_t>(e) * D + j];
    }
  }
  auto xn = x.node();
  return detail::make_result<S>({n_segments, D}, std::move(out), {x},
                                [xn, seg, D, kind, arg = std::move(arg),
                                 n_segments](detail::NodeT<S>& self) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  if (kind == Reduce::max) {
                                    for (int s = 0; s < n_segments; ++s)
                                      for (int j = 0; j < D; ++j) {
                                        const int e = arg[static_cast<size_t>(s) * D + j];
                                        if (e >= 0)
                                          xn->grad[static_cast<size_t>(e) * D + j] +=
                                              self.grad[static_cast<size_t>(s) * D + j];
                                      }
                                  } else {
                                    for (size_t e = 0; e < seg.size(); ++e)
                                      for (int j = 0; j < D; ++j)
                                        xn->grad[e * D + j] +=
                                            self.grad[static_cast<size_t>(seg[e]) * D + j];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// -log softmax(logits)[target] over a rank-1 logit vector, numerically
// stabilized by max subtraction. Masked-out entries are excluded from the
// normalization entirely.
template <class S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, int target,
                                 const std::vector<uint8_t>* mask = nullptr) {
  if (logits.rank() != 1) throw DimensionError("softmax_cross_entropy: rank-1 logits required");
  const int n = logits.dim(0);
  if (target < 0 || target >= n) throw InvalidInput("softmax_cross_entropy: target out of range");
  if (mask) {
    if (static_cast<int>(mask->size()) != n)
      throw DimensionError("softmax_cross_entropy: mask length mismatch");
    bool any = false;
    for (auto b : *mask) any = any || b;
    if (!any) throw InvalidInput("softmax_cross_entropy: all entries masked");
    if (!(*mask)[target]) throw InvalidInput("softmax_cross_entropy: target is masked out");
  }
  auto active = [&](int i) { return !mask || (*mask)[i]; };
  S mx = -std::numeric_limits<S>::infinity();
  for (int i = 0; i < n; ++i)
    if (active(i)) mx = std::max(mx, logits.values()[i]);
  S denom = 0;
  std::vector<S> soft(n, S(0));
  for (int i = 0; i < n; ++i)
    if (active(i)) {
      soft[i] = std::exp(logits.values()[i] - mx);
      denom += soft[i];
    }
  for (int i = 0; i < n; ++i) soft[i] /= denom;
  const S loss = -(logits.values()[target] - mx - std::log(denom));
  auto ln = logits.node();
  return detail::make_result<S>({1}, {loss}, {logits},
                                [ln, target, soft = std::move(soft)](detail::NodeT<S>& self) {
                                  if (!ln->requires_grad) return;
                                  ln->ensure_grad();
                                  const S g = self.grad[0];
                                  for (size_t i = 0; i < soft.size(); ++i) ln->grad[i] += g * soft[i];
                                  ln->grad[target] -= g;
                                });
}

// Mean over rows of -log softmax(row)[target_row]. Rows with target < 0 are
// skipped (and excluded from the mean).
template <class S>
TensorT<S> softmax_xent_rows(const TensorT<S>& logits, const std::vector<int>& targets) {
  detail::require_rank2(logits, "softmax_xent_rows");
  const int R = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(targets.size()) != R)
    throw DimensionError("softmax_xent_rows: target count mismatch");
  int active = 0;
  for (int t : targets) {
    if (t >= C) throw InvalidInput("softmax_xent_rows: target out of range");
    if (t >= 0) ++active;
  }
  if (active == 0) throw InvalidInput("softmax_xent_rows: no active rows");
  std::vector<S> soft(logits.values());
  S total = 0;
  for (int i = 0; i < R; ++i) {
    S* row = soft.data() + static_cast<size_t>(i) * C;
    S mx = row[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (int j = 0; j < C; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (int j = 0; j < C; ++j) row[j] /= denom;
    if (targets[i] >= 0) total += -std::log(std::max(row[targets[i]], std::numeric_limits<S>::min()));
  }
  total /= S(active);
  auto ln = logits.node();
  return detail::make_result<S>(
      {1}, {total}, {logits},
      [ln, targets, soft = std::move(soft), R, C, active](detail::NodeT<S>& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const S g = self.grad[0] / S(active);
        for (int i = 0; i < R; ++i) {
          if (targets[i] < 0) continue;
          const S* s = soft.data() + static_cast<size_t>(i) * C;
          S* out = ln->grad.data() + static_cast<size_t>(i) * C;
          for (int j = 0; j < C; ++j) out[j] += g * s[j];
          out[static_cast<size_t>(targets[i])] -= g;
        }
      });
}

// Mean elementwise binary cross-entropy on logits.
template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const std::vector<S>& targets) {
  if (static_cast<int64_t>(targets.size()) != logits.size())
    throw DimensionError("bce_with_logits: target count mismatch");
  const int64_t n = logits.size();
  S total = 0;
  std::vector<S> sig(n);
  for (int64_t i = 0; i < n; ++i) {
    const S x = logits.values()[i];
    // log(1 + exp(-|x|)) is stable for both signs.
    const S softplus = std::log1p(std::exp(-std::abs(x)));
    total += std::max(x, S(0)) - x * targets[i] + softplus;
    sig[i] = x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  }
  total /= S(n);
  auto ln = logits.node();
  return detail::make_result<S>({1}, {total}, {logits},
                                [ln, targets, sig = std::move(sig), n](detail::NodeT<S>& self) {
                                  if (!ln->requires_grad) return;
                                  ln->ensure_grad();
                                  const S g = self.grad[0] / S(n);
                                  for (int64_t i = 0; i < n; ++i)
                                    ln->grad[i] += g * (sig[i] - targets[i]);
                                });
}

// Mean squared error against a constant target.
template <class S>
TensorT<S> mse_loss(const TensorT<S>& pred, const std::vector<S>& target) {
  if (static_cast<int64_t>(target.size()) != pred.size())
    throw DimensionError("mse_loss: target count mismatch");
  const int64_t n = pred.size();
  S total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const S d = pred.values()[i] - target[i];
    total += d * d;
  }
  total /= S(n);
  auto pn = pred.node();
  return detail::make_result<S>({1}, {total}, {pred}, [pn, target, n](detail::NodeT<S>& self) {
    if (!pn->requires_grad) return;
    pn->ensure_grad();
    const S g = self.grad[0] * S(2) / S(n);
    for (int64_t i = 0; i < n; ++i) pn->grad[i] += g * (pn->value[i] - target[i]);
  });
}

// ---------------------------------------------------------------------------
// Utilities without gradients
// ---------------------------------------------------------------------------

template <class S>
int argmax(const std::vector<S>& v, int begin = 0, int end = -1) {
  if (end < 0) end = static_cast<int>(v.size());
  int best = begin;
  for (int i = begin + 1; i < end; ++i)
    if (v[i] > v[best]) best = i;
  return best - begin;
}

template <class S>
int argmax(const TensorT<S>& t) {
  return argmax(t.values());
}

template <class S>
std::vector<int> argmax_rows(const TensorT<S>& t) {
  const int R = t.rows(), C = t.cols();
  std::vector<int> out(R);
  for (int i = 0; i < R; ++i) {
    int best = 0;
    for (int j = 1; j < C; ++j)
      if (t.at(i, j) > t.at(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Topological order is the postorder of
// a deterministic DFS over parent edges, so replays are bit-identical.
// With release_buffers, each interior node's value and grad storage is freed
// as soon as its backward function has run.
template <class S>
void backward(const TensorT<S>& loss, bool release_buffers = false) {
  if (loss.size() != 1) throw InvalidInput("backward: loss must be a scalar");
  using Node = detail::NodeT<S>;
  auto root = loss.node();
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
      if (release_buffers && !n->leaf) {
        n->value = std::vector<S>();
        n->grad = std::vector<S>();
        n->backward_fn = nullptr;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
struct AdamStateT {
  AdamConfig cfg;
  int64_t step_count = 0;
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;

  void init(const std::vector<TensorT<S>>& params, AdamConfig c = {}) {
    cfg = c;
    step_count = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), S(0));
      v.emplace_back(p.size(), S(0));
    }
  }
};

// One Adam update with bias correction; gradients are zeroed afterward.
// A non-finite gradient aborts with a Divergence diagnostic.
template <class S>
void adam_step(std::vector<TensorT<S>>& params, AdamStateT<S>& state) {
  if (params.size() != state.m.size()) throw InvalidInput("adam_step: state/parameter count mismatch");
  state.step_count += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.requires_grad()) throw InvalidInput("adam_step: parameter does not track gradients");
    if (!p.has_grad()) p.zero_grad();
    auto& val = p.mutable_values();
    auto& g = p.mutable_grad();
    auto& mk = state.m[k];
    auto& vk = state.v[k];
    for (size_t i = 0; i < val.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i])))
        throw Divergence("adam_step: non-finite gradient encountered");
      mk[i] = static_cast<S>(b1 * mk[i] + (1.0 - b1) * g[i]);
      vk[i] = static_cast<S>(b2 * vk[i] + (1.0 - b2) * g[i] * g[i]);
      const double mhat = mk[i] / bc1;
      const double vhat = vk[i] / bc2;
      val[i] -= static_cast<S>(state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
      g[i] = S(0);
    }
  }
}

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;
using AdamState = AdamStateT<float>;

}  // namespace nar
