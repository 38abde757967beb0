#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "nar/model.hpp"
#include "nar/runner.hpp"

using namespace nar;

namespace {

Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  Graph g;
  g.n = n;
  g.adj.assign(static_cast<size_t>(n) * n, 0);
  for (auto [a, b] : edges) g.adj[static_cast<size_t>(a) * n + b] = 1;
  return g;
}

Model build_model(HintScheme scheme, int d_h = 16, uint64_t seed = 1, bool collection = true) {
  ModelConfig mc;
  mc.scheme = scheme;
  mc.use_output_collection = collection;
  mc.processor.d_h = d_h;
  mc.init_seed = seed;
  return Model::build(mc);
}

void zero_params(Model& m) {
  for (auto& p : m.params.tensors)
    std::fill(p.mutable_values().begin(), p.mutable_values().end(), 0.f);
}

StepInputsT<float> inputs_at(const Model& m, const Trajectory& traj, int step) {
  return step_inputs_from_values(
      m.specs, hints_from_targets<float>(m.specs, step_targets<float>(traj, step), traj.graph.n),
      traj.graph.n);
}

int spec_index(const Model& m, const char* name) {
  for (size_t k = 0; k < m.specs.size(); ++k)
    if (m.specs[k].name == name) return static_cast<int>(k);
  return -1;
}

// Node-located values move with the node; node-valued hints map through the
// permutation.
StepTargetsT<float> permute_targets(const std::vector<HintSpec>& specs,
                                    const StepTargetsT<float>& t, const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  StepTargetsT<float> out = t;
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    if (spec.loc == HintLoc::node) {
      if (!t.indices[k].empty()) {
        for (int i = 0; i < n; ++i) {
          int v = t.indices[k][i];
          if (spec.type == HintType::node_pointer && v >= 0) v = perm[v];
          out.indices[k][perm[i]] = v;
        }
      }
      if (!t.values[k].empty())
        for (int i = 0; i < n; ++i) out.values[k][perm[i]] = t.values[k][i];
    } else if (spec.type == HintType::node_pointer) {
      const int v = t.indices[k][0];
      out.indices[k][0] = (v < 0 || v >= n) ? v : perm[v];
    }
  }
  return out;
}

Graph permute_graph(const Graph& g, const std::vector<int>& perm) {
  Graph out = g;
  std::fill(out.adj.begin(), out.adj.end(), 0);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      if (g.edge(i, j)) out.adj[static_cast<size_t>(perm[i]) * g.n + perm[j]] = 1;
  return out;
}

}  // namespace

TEST_CASE("all-zero weights give zero features") {
  Model m = build_model(HintScheme::recursive);
  zero_params(m);
  const Graph g = from_edges(3, {{0, 1}, {1, 2}});
  const auto traj = sample_trajectory_recursive(g);
  const auto pairs = build_pairs(g, Connectivity::symmetric);
  auto enc = m.encoder.encode(inputs_at(m, traj, 0), pairs);
  for (float v : enc.h_i.values()) CHECK(v == 0.f);
  for (float v : enc.h_g.values()) CHECK(v == 0.f);
  for (float v : matmul(enc.edge_in, enc.edge_w).values()) CHECK(v == 0.f);
}

TEST_CASE("graph pointer encodes as a one-hot node indicator") {
  Model m = build_model(HintScheme::recursive);
  zero_params(m);
  const int u_idx = spec_index(m, "u");
  m.encoder.hint_w[u_idx].mutable_values()[0] = 1.f;  // channel 0 only

  const int n = 5;
  Graph g = from_edges(n, {{3, 0}});
  Trajectory traj = sample_trajectory_recursive(g);
  auto targets = step_targets<float>(traj, 0);
  targets.indices[u_idx] = {3};
  auto inputs =
      step_inputs_from_values(m.specs, hints_from_targets<float>(m.specs, targets, n), n);
  auto enc = m.encoder.encode(inputs, build_pairs(g, Connectivity::symmetric));
  for (int i = 0; i < n; ++i) CHECK(enc.h_i.at(i, 0) == (i == 3 ? 1.f : 0.f));
}

TEST_CASE("encoder permutation equivariance") {
  Model m = build_model(HintScheme::recursive, 24, 7);
  const Graph g = gen_er(8, 0.4, 11);
  const auto traj = sample_trajectory_recursive(g);
  const auto targets = step_targets<float>(traj, 4);

  const std::vector<int> perm{3, 7, 1, 0, 5, 2, 6, 4};
  const Graph pg = permute_graph(g, perm);
  const auto ptargets = permute_targets(m.specs, targets, perm);

  auto enc = m.encoder.encode(
      step_inputs_from_values(m.specs, hints_from_targets<float>(m.specs, targets, g.n), g.n),
      build_pairs(g, Connectivity::symmetric));
  auto penc = m.encoder.encode(
      step_inputs_from_values(m.specs, hints_from_targets<float>(m.specs, ptargets, g.n), g.n),
      build_pairs(pg, Connectivity::symmetric));

  for (int i = 0; i < g.n; ++i)
    for (int c = 0; c < 24; ++c)
      CHECK(penc.h_i.at(perm[i], c) == doctest::Approx(enc.h_i.at(i, c)).epsilon(1e-6));
  for (int c = 0; c < 24; ++c)
    CHECK(penc.h_g.at(0, c) == doctest::Approx(enc.h_g.at(0, c)).epsilon(1e-6));
}

TEST_CASE("decoder pointer logits permute with node features") {
  Model m = build_model(HintScheme::recursive, 16, 3);
  Rng rng(9);
  const int n = 3;
  std::vector<float> pv(n * 16);
  for (auto& x : pv) x = static_cast<float>(rng.normal());
  auto p_i = Tensor::from({n, 16}, pv);
  auto pooled = reshape(reduce(p_i, 0, Reduce::sum), {1, 16});
  auto decoded = m.decoder.decode(p_i, pooled);

  const int u_idx = spec_index(m, "u");
  CHECK(decoded.logits[u_idx].size() == n);

  const std::vector<int> perm{2, 0, 1};
  std::vector<float> permuted(n * 16);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 16; ++c) permuted[perm[i] * 16 + c] = p_i.at(i, c);
  auto p_perm = Tensor::from({n, 16}, permuted);
  auto decoded_p = m.decoder.decode(p_perm, reshape(reduce(p_perm, 0, Reduce::sum), {1, 16}));
  for (int i = 0; i < n; ++i)
    CHECK(decoded_p.logits[u_idx].values()[perm[i]] ==
          doctest::Approx(decoded.logits[u_idx].values()[i]).epsilon(1e-5));
}

TEST_CASE("uniform logits give ln k losses") {
  Model m = build_model(HintScheme::recursive, 16, 3);
  zero_params(m);
  const Graph g = from_edges(4, {{0, 1}, {0, 2}, {2, 3}});
  const auto traj = sample_trajectory_recursive(g);
  auto step = m.step(inputs_at(m, traj, 0), build_pairs(g, Connectivity::symmetric), nullptr,
                     nullptr);
  auto loss = hint_loss<float>(m.specs, step.decoded, step_targets<float>(traj, 0));
  CHECK(loss.per_hint[spec_index(m, "u")] == doctest::Approx(std::log(4.0)).epsilon(1e-5));
  CHECK(loss.per_hint[spec_index(m, "stack_op")] == doctest::Approx(std::log(3.0)).epsilon(1e-5));
  CHECK(loss.per_hint[spec_index(m, "u_v")] == doctest::Approx(std::log(5.0)).epsilon(1e-5));
}

TEST_CASE("perfect predictions give zero scalar loss") {
  Model m = build_model(HintScheme::recursive, 16, 3);
  const Graph g = from_edges(2, {{0, 1}});
  const auto traj = sample_trajectory_recursive(g);
  UnrollOptions opts;
  opts.oracle_stub = true;
  auto res = unroll(m, traj, RunMode::eval, RunConfig{}, nullptr, opts);
  CHECK(res.per_hint_loss[spec_index(m, "time")] == 0.0);
  CHECK(res.per_hint_loss[spec_index(m, "u_d")] == 0.0);
  CHECK(res.per_hint_loss[spec_index(m, "u_f")] == 0.0);
}

TEST_CASE("missing hint value raises invalid input") {
  Model m = build_model(HintScheme::recursive);
  const Graph g = from_edges(2, {{0, 1}});
  const auto traj = sample_trajectory_recursive(g);
  auto inputs = inputs_at(m, traj, 0);
  inputs.dense[3] = Tensor();  // drop u_pi
  CHECK_THROWS_AS(m.encoder.encode(inputs, build_pairs(g, Connectivity::symmetric)), InvalidInput);
}

TEST_CASE("constructive round-trip with hand-set weights") {
  // Channel plan: color 0-2, u 3, u_pi 4, u_v 5, u_d 6, u_f 7, time 8,
  // stack_op 9-11, pos 12.
  const int d = 16;
  Model m = build_model(HintScheme::recursive, d, 1);
  zero_params(m);
  auto set = [&](Tensor t, int r, int c, float v) { t.mutable_values()[r * t.cols() + c] = v; };

  for (int c = 0; c < 3; ++c) set(m.encoder.hint_w[spec_index(m, "color")], c, c, 1.f);
  set(m.encoder.hint_w[spec_index(m, "u")], 0, 3, 1.f);
  set(m.encoder.hint_w[spec_index(m, "u_pi")], 0, 4, 1.f);
  set(m.encoder.hint_w[spec_index(m, "u_v")], 0, 5, 1.f);
  set(m.encoder.hint_w[spec_index(m, "u_d")], 0, 6, 1.f);
  set(m.encoder.hint_w[spec_index(m, "u_f")], 0, 7, 1.f);
  set(m.encoder.hint_w[spec_index(m, "time")], 0, 8, 1.f);
  for (int c = 0; c < 3; ++c) set(m.encoder.hint_w[spec_index(m, "stack_op")], c, 9 + c, 1.f);
  set(m.encoder.hint_w[spec_index(m, "pos")], 0, 12, 1.f);

  // processor as identity plus a broadcast of the graph features: every
  // message is relu(h_g), so the aggregate is h_g and the update yields
  // relu(x + h_g) = x + h_g (all channel values are non-negative here).
  for (int c = 0; c < d; ++c) {
    set(m.processor.w_graph, c, c, 1.f);
    set(m.processor.msg_out.W, c, c, 1.f);
    set(m.processor.w_upd_x, c, c, 1.f);
    set(m.processor.w_upd_m, c, c, 1.f);
    set(m.processor.upd_out.W, c, c, 1.f);
  }

  const int n = 4;
  for (int c = 0; c < 3; ++c) set(m.decoder.node_heads[spec_index(m, "color")].W, c, c, 10.f);
  set(m.decoder.ptr_trunk.W, 3, 0, 1.f);
  set(m.decoder.ptr_trunk.W, 4, 1, 1.f);
  set(m.decoder.ptr_trunk.W, 5, 2, 1.f);
  set(m.decoder.ptr_head, 0, 0, 10.f);
  set(m.decoder.ptr_head, 1, 1, 10.f);
  set(m.decoder.ptr_head, 2, 2, 10.f);
  // graph trunk: h0 = relu(1 - pooled u_v indicator), h1-h3 scalar channels,
  // h4-h6 stack_op channels
  set(m.decoder.graph_trunk.W, 5, 0, -1.f);
  m.decoder.graph_trunk.b.mutable_values()[0] = 1.f;
  set(m.decoder.graph_trunk.W, 6, 1, 1.f);
  set(m.decoder.graph_trunk.W, 7, 2, 1.f);
  set(m.decoder.graph_trunk.W, 8, 3, 1.f);
  for (int c = 0; c < 3; ++c) set(m.decoder.graph_trunk.W, 9 + c, 4 + c, 1.f);
  set(m.decoder.graph_head.W, 0, 0, 5.f);      // u_v none slot
  set(m.decoder.graph_head.W, 1, 1, 1.f / n);  // u_d
  set(m.decoder.graph_head.W, 2, 2, 1.f / n);  // u_f
  set(m.decoder.graph_head.W, 3, 3, 1.f / n);  // time
  for (int c = 0; c < 3; ++c) set(m.decoder.graph_head.W, 4 + c, 4 + c, 10.f);

  const Graph g = from_edges(n, {{0, 1}, {1, 2}, {0, 3}});
  const auto traj = sample_trajectory_recursive(g);
  const auto pairs = build_pairs(g, Connectivity::symmetric);
  for (int t = 0; t < traj.length(); ++t) {
    const auto targets = step_targets<float>(traj, t);
    auto out = m.step(inputs_at(m, traj, t), pairs, nullptr, nullptr);
    for (size_t k = 0; k < m.specs.size(); ++k) {
      const auto& spec = m.specs[k];
      if (spec.role != HintRole::hint) continue;
      const auto& logits = out.decoded.logits[k];
      if (spec.type == HintType::categorical && spec.loc == HintLoc::node) {
        auto am = argmax_rows(logits);
        for (int i = 0; i < n; ++i) CHECK(am[i] == targets.indices[k][i]);
      } else if (spec.type == HintType::node_pointer || spec.type == HintType::categorical) {
        CHECK(argmax(logits) == targets.indices[k][0]);
      } else if (spec.type == HintType::scalar && spec.loc == HintLoc::graph) {
        CHECK(logits.scalar_value() == doctest::Approx(targets.values[k][0]).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("baseline scheme encodes pointer hints into edge features") {
  Model m = build_model(HintScheme::baseline, 16, 2, /*collection=*/false);
  const Graph g = from_edges(3, {{0, 1}, {1, 2}});
  const auto traj = sample_trajectory_baseline(g);
  auto enc = m.encoder.encode(inputs_at(m, traj, 4), build_pairs(g, Connectivity::symmetric));
  CHECK(enc.edge_in.dim(1) == PairList::kBaseChannels + 1);
  CHECK(enc.edge_w.dim(0) == PairList::kBaseChannels + 1);
}

TEST_CASE("decode_output head") {
  Model m = build_model(HintScheme::recursive, 16, 5, /*collection=*/false);
  SUBCASE("n=1 argmax forced to self") {
    auto p = Tensor::from({1, 16}, std::vector<float>(16, 0.3f));
    auto logits = m.output_head(p);
    CHECK(logits.shape() == std::vector<int>{1, 1});
    CHECK(argmax_rows(logits) == std::vector<int>{0});
  }
  SUBCASE("identical node features give uniform rows") {
    std::vector<float> row(16);
    Rng rng(3);
    for (auto& v : row) v = static_cast<float>(rng.normal());
    std::vector<float> all;
    for (int i = 0; i < 4; ++i) all.insert(all.end(), row.begin(), row.end());
    auto logits = m.output_head(Tensor::from({4, 16}, all));
    for (int i = 0; i < 4; ++i)
      for (int j = 1; j < 4; ++j)
        CHECK(logits.at(i, j) == doctest::Approx(logits.at(i, 0)).epsilon(1e-4));
  }
}

TEST_CASE("composed step gradients match finite differences (64-bit)") {
  ModelConfig mc;
  mc.scheme = HintScheme::recursive;
  mc.processor.d_h = 8;
  mc.init_seed = 21;
  auto m = ModelT<double>::build(mc);
  const Graph g = from_edges(3, {{0, 1}, {1, 2}, {2, 0}});
  const auto traj = sample_trajectory_recursive(g);
  const auto pairs = build_pairs(g, Connectivity::symmetric);
  const auto targets = step_targets<double>(traj, 2);
  const auto inputs =
      step_inputs_from_values(m.specs, hints_from_targets<double>(m.specs, targets, g.n), g.n);

  std::vector<Tensor64> params = m.params.tensors;
  gradcheck::Options opts;
  opts.max_coords_per_input = 6;
  auto res = gradcheck::check_gradients(
      [&](const std::vector<Tensor64>&) {
        auto out = m.step(inputs, pairs, nullptr, nullptr);
        return hint_loss<double>(m.specs, out.decoded, targets).total;
      },
      params, opts);
  CHECK_MESSAGE(res.ok, res.detail);
  CHECK(res.checked > 50);
}
