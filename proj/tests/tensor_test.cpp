#include "doctest.h"
#include "gradcheck.hpp"
#include "nar/tensor.hpp"

using namespace nar;
using gradcheck::random_tensor;
using gradcheck::random_tensor_off_kink;

TEST_CASE("matmul identity and scalar cases") {
  auto a = Tensor64::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor64::from({2, 1}, {3, 4});
  auto c = matmul(a, b);
  CHECK(c.values() == std::vector<double>{3, 4});

  auto s = matmul(Tensor64::from({1, 1}, {2}), Tensor64::from({1, 1}, {5}));
  CHECK(s.scalar_value() == doctest::Approx(10));

  CHECK_THROWS_AS(matmul(Tensor64::zeros({2, 3}), Tensor64::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul gradient of sum equals ones times b^T") {
  Rng rng(42);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto loss = reduce_all(matmul(a, b), Reduce::sum);
  backward(loss);
  // dL/dA = ones(3,2) @ B^T
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double expect = 0;
      for (int k = 0; k < 2; ++k) expect += b.at(j, k);
      CHECK(a.grad()[i * 4 + j] == doctest::Approx(expect).epsilon(1e-12));
    }

  std::vector<Tensor64> inputs{a, b};
  auto res = gradcheck::check_gradients(
      [](const std::vector<Tensor64>& in) { return reduce_all(matmul(in[0], in[1]), Reduce::sum); },
      inputs);
  CHECK(res.ok);
}

TEST_CASE("relu examples") {
  auto x = Tensor64::from({3}, {-1, 0, 2});
  auto y = relu(x);
  CHECK(y.values() == std::vector<double>{0, 0, 2});

  auto neg = Tensor64::from({3}, {-1, -2, -3}, true);
  auto loss = reduce_all(relu(neg), Reduce::sum);
  backward(loss);
  CHECK(loss.scalar_value() == 0);
  CHECK(neg.grad() == std::vector<double>{0, 0, 0});

  auto t = Tensor64::from({1}, {3}, true);
  backward(reduce_all(relu(t), Reduce::sum));
  CHECK(t.grad()[0] == 1);
}

TEST_CASE("softmax cross entropy examples") {
  auto uniform = softmax_cross_entropy(Tensor64::from({2}, {0, 0}), 0);
  CHECK(uniform.scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  auto stable = softmax_cross_entropy(Tensor64::from({2}, {1000, 0}), 0);
  CHECK(std::isfinite(stable.scalar_value()));
  CHECK(stable.scalar_value() == doctest::Approx(0).epsilon(1e-9));

  // gradient equals softmax(logits) - onehot(target)
  Rng rng(7);
  auto logits = random_tensor({5}, rng);
  auto loss = softmax_cross_entropy(logits, 2);
  backward(loss);
  auto soft = softmax_rows(Tensor64::from({5}, logits.values()));
  for (int i = 0; i < 5; ++i) {
    const double expect = soft.values()[i] - (i == 2 ? 1 : 0);
    CHECK(logits.grad()[i] == doctest::Approx(expect).epsilon(1e-9));
  }
  std::vector<Tensor64> inputs{logits};
  auto res = gradcheck::check_gradients(
      [](const std::vector<Tensor64>& in) { return softmax_cross_entropy(in[0], 2); }, inputs);
  CHECK(res.ok);
}

TEST_CASE("softmax cross entropy mask semantics") {
  std::vector<uint8_t> mask{1, 0, 1};
  auto logits = Tensor64::from({3}, {0, 100, 0});
  // masked entry excluded from normalization: loss is ln 2, not dominated by 100
  auto loss = softmax_cross_entropy(logits, 0, &mask);
  CHECK(loss.scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  std::vector<uint8_t> empty{0, 0, 0};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, 0, &empty), InvalidInput);
}

TEST_CASE("reduce examples") {
  auto v = Tensor64::from({1, 3}, {1, 2, 3});
  CHECK(reduce(v, 1, Reduce::sum).values() == std::vector<double>{6});

  auto m = Tensor64::from({1, 3}, {1, 3, 2}, true);
  auto mx = reduce(m, 1, Reduce::max);
  CHECK(mx.values() == std::vector<double>{3});
  backward(reduce_all(mx, Reduce::sum));
  CHECK(m.grad() == std::vector<double>{0, 1, 0});

  auto g = Tensor64::from({2, 2}, {1, 2, 3, 4});
  CHECK(reduce(g, 0, Reduce::mean).values() == std::vector<double>{2, 3});
}

TEST_CASE("reduce max ties break toward the lowest index") {
  auto m = Tensor64::from({1, 4}, {5, 7, 7, 1}, true);
  backward(reduce_all(reduce(m, 1, Reduce::max), Reduce::sum));
  CHECK(m.grad() == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("canonical sum is bit-identical under permutation") {
  Rng rng(3);
  std::vector<double> data(257);
  for (auto& v : data) v = rng.normal() * std::exp(rng.normal());
  auto base = reduce_sum_canonical(Tensor64::from({1, 257}, data), 1).values()[0];
  for (int trial = 0; trial < 20; ++trial) {
    auto shuffled = data;
    rng.shuffle(shuffled);
    auto out = reduce_sum_canonical(Tensor64::from({1, 257}, shuffled), 1).values()[0];
    CHECK(out == base);  // bit-identical
  }
}

TEST_CASE("backward basics") {
  auto w = Tensor64::from({3}, {1, 2, 3}, true);
  backward(reduce_all(w, Reduce::sum));
  CHECK(w.grad() == std::vector<double>{1, 1, 1});

  // disconnected parameter receives zero gradient
  auto lonely = Tensor64::from({2}, {1, 1}, true);
  auto w2 = Tensor64::from({2}, {1, 2}, true);
  backward(reduce_all(w2, Reduce::sum));
  CHECK(lonely.grad() == std::vector<double>{0, 0});

  CHECK_THROWS_AS(backward(Tensor64::from({2}, {1, 2}, true)), InvalidInput);
}

TEST_CASE("composed matmul+relu+cross-entropy matches finite differences") {
  Rng rng(11);
  for (int inst = 0; inst < 8; ++inst) {
    auto x = random_tensor({2, 6}, rng);
    auto w1 = random_tensor({6, 8}, rng, 0.7);
    auto b1 = random_tensor_off_kink({8}, rng);
    auto w2 = random_tensor({8, 4}, rng, 0.7);
    std::vector<Tensor64> inputs{x, w1, b1, w2};
    auto res = gradcheck::check_gradients(
        [](const std::vector<Tensor64>& in) {
          auto h = relu(add(matmul(in[0], in[1]), broadcast_rows(in[2], 2)));
          auto logits = matmul(h, in[3]);
          return add(softmax_cross_entropy(reshape(gather_rows(logits, {0}), {4}), 1),
                     softmax_xent_rows(logits, {0, 3}));
        },
        inputs);
    CHECK_MESSAGE(res.ok, res.detail);
  }
}

TEST_CASE("tape replay determinism: rebuilt graph gives bit-identical grads") {
  Rng rng(5);
  auto x_vals = random_tensor({4, 4}, rng).values();
  auto w_vals = random_tensor({4, 4}, rng).values();
  std::vector<double> first, second;
  for (int pass = 0; pass < 2; ++pass) {
    auto x = Tensor64::from({4, 4}, x_vals, true);
    auto w = Tensor64::from({4, 4}, w_vals, true);
    auto loss = softmax_cross_entropy(
        reshape(gather_rows(relu(matmul(x, w)), {1}), {4}), 2);
    backward(loss);
    (pass == 0 ? first : second) = w.grad();
  }
  CHECK(first == second);  // bit-identical
}

TEST_CASE("gradients stay finite through extreme logits") {
  auto logits = Tensor64::from({3}, {1000, -1000, 0}, true);
  auto loss = softmax_cross_entropy(logits, 0);
  backward(loss);
  for (double g : logits.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("plumbing op gradients match finite differences") {
  Rng rng(23);

  SUBCASE("concat slice gather transpose") {
    auto a = random_tensor({3, 2}, rng);
    auto b = random_tensor({3, 3}, rng);
    std::vector<Tensor64> inputs{a, b};
    auto res = gradcheck::check_gradients(
        [](const std::vector<Tensor64>& in) {
          auto cat = concat_cols<double>({in[0], in[1]});
          auto t = transpose(slice_cols(cat, 1, 4));
          auto g = gather_rows(t, {2, 0, 2});
          return reduce_all(multiply(g, g), Reduce::sum);
        },
        inputs);
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("broadcast scale_rows sigmoid softmax") {
    auto v = random_tensor({4}, rng);
    auto m = random_tensor({3, 4}, rng);
    auto c = random_tensor({3}, rng);
    std::vector<Tensor64> inputs{v, m, c};
    auto res = gradcheck::check_gradients(
        [](const std::vector<Tensor64>& in) {
          auto x = add(broadcast_rows(in[0], 3), in[1]);
          auto y = scale_rows(sigmoid(x), in[2]);
          return reduce_all(softmax_rows(y), Reduce::max);
        },
        inputs);
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("segment reduce sum and max") {
    auto x = random_tensor({6, 3}, rng);
    // jitter to keep max arguments distinct
    for (size_t i = 0; i < x.mutable_values().size(); ++i) x.mutable_values()[i] += 1e-3 * i;
    std::vector<int> seg{0, 0, 1, 2, 2, 2};
    std::vector<Tensor64> inputs{x};
    auto res = gradcheck::check_gradients(
        [&](const std::vector<Tensor64>& in) {
          auto s = segment_reduce(in[0], seg, 3, Reduce::sum);
          auto mx = segment_reduce(in[0], seg, 3, Reduce::max);
          return add(reduce_all(multiply(s, s), Reduce::sum), reduce_all(mx, Reduce::sum));
        },
        inputs);
    CHECK_MESSAGE(res.ok, res.detail);
  }

  SUBCASE("mse bce mask_select") {
    auto p = random_tensor({5}, rng);
    std::vector<double> target{0.1, -0.2, 0.3, 0.0, 1.5};
    std::vector<double> bce_target{1, 0, 1, 0, 1};
    std::vector<uint8_t> mask{1, 0, 1, 1, 0};
    std::vector<Tensor64> inputs{p};
    auto res = gradcheck::check_gradients(
        [&](const std::vector<Tensor64>& in) {
          auto a = mse_loss(in[0], target);
          auto b = bce_with_logits(in[0], bce_target);
          auto c = reduce_all(mask_select(in[0], mask), Reduce::sum);
          return add(add(a, b), c);
        },
        inputs);
    CHECK_MESSAGE(res.ok, res.detail);
  }
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  std::vector<Tensor> params{Tensor::from({2}, {1.f, -2.f}, true)};
  params[0].zero_grad();
  AdamState state;
  state.init(params);
  adam_step(params, state);
  CHECK(params[0].values() == std::vector<float>{1.f, -2.f});
  CHECK(state.step_count == 1);
}

TEST_CASE("adam descends on w^2") {
  std::vector<Tensor> params{Tensor::from({1}, {1.f}, true)};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  state.init(params, cfg);
  auto loss0 = multiply(params[0], params[0]);
  backward(loss0);
  adam_step(params, state);
  CHECK(params[0].values()[0] < 1.f);
}

TEST_CASE("adam reaches the least-squares optimum") {
  // min_w mean((X w - y)^2) with X = [[1,0],[0,1],[1,1]], w* = (0.3, -0.2).
  auto X = Tensor64::from({3, 2}, {1, 0, 0, 1, 1, 1});
  const std::vector<double> y{0.3, -0.2, 0.1};
  std::vector<Tensor64> params{Tensor64::zeros({2, 1}, true)};
  AdamStateT<double> state;
  AdamConfig cfg;
  cfg.lr = 0.02;
  state.init(params, cfg);
  double last = 1.0;
  for (int step = 0; step < 200; ++step) {
    auto pred = matmul(X, params[0]);
    auto loss = mse_loss(reshape(pred, {3}), y);
    last = loss.scalar_value();
    if (last < 1e-6) break;
    backward(loss);
    adam_step(params, state);
  }
  CHECK(last < 1e-6);
  CHECK(params[0].values()[0] == doctest::Approx(0.3).epsilon(1e-2));
  CHECK(params[0].values()[1] == doctest::Approx(-0.2).epsilon(1e-2));
}

TEST_CASE("adam aborts on non-finite gradients") {
  std::vector<Tensor> params{Tensor::from({1}, {1.f}, true)};
  AdamState state;
  state.init(params);
  params[0].zero_grad();
  params[0].mutable_grad()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(params, state), Divergence);
}

TEST_CASE("release_buffers frees interior storage but keeps leaf grads") {
  auto w = Tensor64::from({2, 2}, {1, 2, 3, 4}, true);
  auto mid = relu(w);
  auto loss = reduce_all(mid, Reduce::sum);
  backward(loss, /*release_buffers=*/true);
  CHECK(w.grad() == std::vector<double>{1, 1, 1, 1});
  CHECK(mid.values().empty());
}
