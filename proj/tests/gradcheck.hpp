#pragma once

// Central finite-difference oracle for gradient checks, 64-bit. Independent of
// the backward pass: it only re-evaluates the forward function. A coordinate
// that fails at the base step size is retried with a much smaller step, which
// suppresses artifacts from ReLU/max kinks crossed by the perturbation while
// still catching genuinely wrong gradients (those fail at every step size).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nar/tensor.hpp"

namespace gradcheck {

using nar::Tensor64;

struct Options {
  double h = 1e-5;
  double tol = 1e-4;
  int max_coords_per_input = -1;  // -1 = all coordinates
  uint64_t coord_seed = 17;
};

struct Result {
  bool ok = true;
  double max_rel_err = 0.0;
  int checked = 0;
  std::string detail;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

// build: (const std::vector<Tensor64>&) -> Tensor64 scalar; re-invoked for
// every probe, so it must rebuild the graph from the inputs each time.
template <class F>
Result check_gradients(F build, std::vector<Tensor64>& inputs, const Options& opts = {}) {
  Result res;
  for (auto& t : inputs) t.zero_grad();
  auto loss = build(inputs);
  nar::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs)
    analytic.push_back(t.requires_grad() && t.has_grad() ? t.grad()
                                                         : std::vector<double>(t.size(), 0.0));

  nar::Rng pick(opts.coord_seed);
  auto probe = [&](Tensor64& t, int64_t i, double h) {
    const double orig = t.values()[i];
    double fp, fm;
    {
      nar::NoGradGuard ng;
      t.mutable_values()[i] = orig + h;
      fp = build(inputs).scalar_value();
      t.mutable_values()[i] = orig - h;
      fm = build(inputs).scalar_value();
    }
    t.mutable_values()[i] = orig;
    return (fp - fm) / (2.0 * h);
  };

  for (size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    std::vector<int64_t> coords;
    if (opts.max_coords_per_input < 0 ||
        inputs[k].size() <= opts.max_coords_per_input) {
      coords.resize(inputs[k].size());
      for (int64_t i = 0; i < inputs[k].size(); ++i) coords[i] = i;
    } else {
      for (int c = 0; c < opts.max_coords_per_input; ++c)
        coords.push_back(static_cast<int64_t>(pick.below(inputs[k].size())));
    }
    for (int64_t i : coords) {
      double fd = probe(inputs[k], i, opts.h);
      double e = rel_err(analytic[k][i], fd);
      if (e > opts.tol) {
        fd = probe(inputs[k], i, opts.h * 1e-2);
        e = rel_err(analytic[k][i], fd);
      }
      res.max_rel_err = std::max(res.max_rel_err, e);
      res.checked += 1;
      if (e > opts.tol && res.ok) {
        res.ok = false;
        res.detail = "input " + std::to_string(k) + " coord " + std::to_string(i) +
                     ": analytic " + std::to_string(analytic[k][i]) + " vs fd " +
                     std::to_string(fd);
      }
    }
  }
  return res;
}

inline Tensor64 random_tensor(std::vector<int> shape, nar::Rng& rng, double scale = 1.0,
                              bool requires_grad = true) {
  auto t = Tensor64::zeros(std::move(shape), requires_grad);
  for (auto& v : t.mutable_values()) v = rng.normal() * scale;
  return t;
}

// Random values kept away from the ReLU kink.
inline Tensor64 random_tensor_off_kink(std::vector<int> shape, nar::Rng& rng, double margin = 1e-3) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& v : t.mutable_values())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  return t;
}

}  // namespace gradcheck
