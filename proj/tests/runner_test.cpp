#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nar/config.hpp"
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

Model build_model(const RunConfig& cfg) { return Model::build(cfg.model_config()); }

RunConfig small_config(StackMode mode = StackMode::node_wise) {
  RunConfig cfg;
  cfg.stack_mode = mode;
  cfg.d_h = 32;
  cfg.value_net.d_stack = 16;
  cfg.value_net.hidden = 32;
  cfg.seed = 7;
  return cfg;
}

Graph random_graph(uint64_t seed, int max_n) {
  Rng rng(seed);
  const int n = 1 + static_cast<int>(rng.below(max_n));
  if (rng.bernoulli(0.25)) return gen_binary_tree(n, seed);
  return gen_er(n, 0.1 + 0.8 * rng.uniform(), seed);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Dataset single_graph_dataset(const Graph& g) {
  Dataset ds;
  ds.splits.push_back({"train", {g}});
  ds.splits.push_back({"val", {g}});
  return ds;
}

}  // namespace

TEST_CASE("collect_output overwrites one entry") {
  OutputTable t(2);
  CHECK(t.entries == std::vector<int>{0, 1});
  collect_output(t, 1, 0);
  CHECK(t.entries == std::vector<int>{0, 0});
  OutputTable t2(5);
  collect_output(t2, 3, 3);
  CHECK(t2.entries == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("perfect-predictor stub reproduces the oracle output everywhere") {
  RunConfig cfg = small_config();
  Model m = build_model(cfg);
  UnrollOptions opts;
  opts.oracle_stub = true;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    const Graph g = random_graph(seed, 24);
    const auto traj = sample_trajectory_recursive(g);
    auto res = unroll(m, traj, RunMode::eval, cfg, nullptr, opts);
    CHECK(res.table.entries == traj.pi);
    CHECK(res.executed_steps == 2 * g.n + g.edge_count());
    CHECK(res.pushes == g.n);
    CHECK(res.pops == g.n);
    CHECK(res.max_stack_depth == run_dfs(g).max_recursion_depth);
  }
}

TEST_CASE("single-node graph executes exactly one push and one pop") {
  RunConfig cfg = small_config();
  Model m = build_model(cfg);
  const auto traj = sample_trajectory_recursive(from_edges(1, {}));
  REQUIRE(traj.length() == 2);
  UnrollOptions opts;
  opts.oracle_stub = true;
  auto res = unroll(m, traj, RunMode::eval, cfg, nullptr, opts);
  CHECK(res.pushes == 1);
  CHECK(res.pops == 1);
  CHECK(res.executed_steps == 2);
}

TEST_CASE("forcing probability 1 feeds ground truth at every step") {
  RunConfig cfg = small_config();
  cfg.teacher_forcing = 1.0;
  Model m = build_model(cfg);
  const Graph g = gen_er(6, 0.5, 3);
  const auto traj = sample_trajectory_recursive(g);
  Rng rng(1);
  UnrollOptions opts;
  std::vector<HintValuesT<float>> captured;
  opts.capture_inputs = &captured;
  unroll(m, traj, RunMode::train, cfg, &rng, opts);
  REQUIRE(captured.size() == static_cast<size_t>(traj.length()));
  for (int t = 0; t < traj.length(); ++t) {
    const auto want = ground_truth_hints<float>(traj, t == 0 ? 0 : t - 1);
    for (size_t k = 0; k < m.specs.size(); ++k) CHECK(captured[t].dense[k] == want.dense[k]);
  }
}

TEST_CASE("zero-initialized model on a 2-node chain scores one half") {
  RunConfig cfg = small_config(StackMode::none);
  Model m = build_model(cfg);
  for (auto& p : m.params.tensors)
    std::fill(p.mutable_values().begin(), p.mutable_values().end(), 0.f);
  const std::vector<Graph> graphs{from_edges(2, {{0, 1}})};
  auto report = evaluate(m, graphs, cfg);
  // uniform logits argmax to node 0 everywhere: table [0, 1] vs pi [0, 0]
  CHECK(report.accuracy_mean == doctest::Approx(0.5));
}

TEST_CASE("untrained model accuracy collapses on large graphs") {
  RunConfig cfg = small_config();
  cfg.seed = 11;
  Model m = build_model(cfg);
  std::vector<Graph> graphs;
  for (uint64_t s = 0; s < 4; ++s) graphs.push_back(gen_er(64, 0.5, s));
  auto report = evaluate(m, graphs, cfg);
  CHECK(report.accuracy_mean < 0.2);  // roughly 1/n under near-uniform pointers
}

TEST_CASE("no-leakage: a step replays bit-exactly out of context") {
  RunConfig cfg = small_config(StackMode::none);
  cfg.use_hidden_state = false;
  Model m = build_model(cfg);
  const Graph g = gen_er(7, 0.4, 21);
  const auto traj = sample_trajectory_recursive(g);

  UnrollOptions opts;
  std::vector<HintValuesT<float>> captured_in;
  std::vector<std::vector<std::vector<float>>> captured_logits;
  opts.capture_inputs = &captured_in;
  opts.capture_logits = &captured_logits;
  unroll(m, traj, RunMode::eval, cfg, nullptr, opts);

  const int t = traj.length() / 2;
  StepInputsT<float> replay;
  replay.dense.resize(m.specs.size());
  for (size_t k = 0; k < m.specs.size(); ++k)
    replay.dense[k] =
        Tensor::from(step_input_shape<float>(m.specs[k], g.n), captured_in[t].dense[k]);
  auto out = m.step(replay, build_pairs(g, cfg.connectivity), nullptr, nullptr);
  for (size_t k = 0; k < m.specs.size(); ++k) {
    if (m.specs[k].role != HintRole::hint) continue;
    CHECK(out.decoded.logits[k].values() == captured_logits[t][k]);
  }
}

TEST_CASE("overfits a single 4-node graph to perfect hint accuracy") {
  RunConfig cfg = small_config();
  cfg.steps = 2000;
  cfg.batch_size = 1;
  cfg.eval_every = 100;
  cfg.lr = 3e-3;
  const Graph g = from_edges(4, {{0, 1}, {0, 3}, {1, 2}});
  Model m = build_model(cfg);
  auto result = train(m, single_graph_dataset(g), cfg,
                      std::filesystem::temp_directory_path() / "nar_overfit", {});
  CHECK(result.best_val_accuracy == doctest::Approx(1.0));

  // hint accuracy: every categorical/pointer hint argmax matches at each step
  const auto traj = sample_trajectory_recursive(g);
  UnrollOptions opts;
  std::vector<std::vector<std::vector<float>>> logits;
  opts.capture_logits = &logits;
  unroll(m, traj, RunMode::eval, cfg, nullptr, opts);
  int correct = 0, total = 0;
  for (int t = 0; t < traj.length(); ++t) {
    const auto targets = step_targets<float>(traj, t);
    for (size_t k = 0; k < m.specs.size(); ++k) {
      const auto& spec = m.specs[k];
      if (spec.role != HintRole::hint) continue;
      if (spec.type == HintType::scalar || spec.type == HintType::mask) continue;
      if (spec.loc == HintLoc::graph) {
        total += 1;
        correct += argmax(logits[t][k], 0, static_cast<int>(logits[t][k].size())) ==
                   targets.indices[k][0];
      } else {
        for (int i = 0; i < g.n; ++i) {
          total += 1;
          const int cols = static_cast<int>(logits[t][k].size()) / g.n;
          correct +=
              argmax(logits[t][k], i * cols, (i + 1) * cols) == targets.indices[k][i];
        }
      }
    }
  }
  CHECK(correct == total);
}

TEST_CASE("no-collection mode learns the 3-node chain output") {
  RunConfig cfg = small_config(StackMode::graph_level);
  cfg.use_output_collection = false;
  cfg.steps = 1500;
  cfg.batch_size = 1;
  cfg.eval_every = 100;
  cfg.lr = 3e-3;
  const Graph g = from_edges(3, {{0, 1}, {1, 2}});
  Model m = build_model(cfg);
  auto result = train(m, single_graph_dataset(g), cfg,
                      std::filesystem::temp_directory_path() / "nar_chain", {});
  CHECK(result.best_val_accuracy == doctest::Approx(1.0));

  const auto traj = sample_trajectory_recursive(g);
  auto res = unroll(m, traj, RunMode::eval, cfg, nullptr);
  CHECK(res.table.entries == std::vector<int>{0, 0, 1});
}

TEST_CASE("identical seeds produce byte-identical metric logs") {
  RunConfig cfg = small_config();
  cfg.steps = 30;
  cfg.batch_size = 2;
  cfg.eval_every = 10;
  DatasetSpec spec;
  spec.train_count = 8;
  spec.val_count = 4;
  spec.test_count = 0;
  spec.train_sizes = {4, 6};
  spec.val_sizes = {4, 6};
  const Dataset ds = gen_dataset(spec);

  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    Model m = build_model(cfg);
    const auto dir =
        std::filesystem::temp_directory_path() / ("nar_det_" + std::to_string(run));
    std::filesystem::remove_all(dir);
    train(m, ds, cfg, dir, {});
    logs[run] = file_bytes(dir / "metrics.csv");
  }
  CHECK(logs[0] == logs[1]);
  CHECK(!logs[0].empty());
}

TEST_CASE("baseline scheme unrolls and trains a step") {
  RunConfig cfg;
  cfg.scheme = HintScheme::baseline;
  cfg.stack_mode = StackMode::none;
  cfg.use_hidden_state = true;
  cfg.use_output_collection = false;
  cfg.d_h = 24;
  Model m = build_model(cfg);
  const Graph g = gen_er(5, 0.5, 2);
  const auto traj = sample_trajectory_baseline(g);
  Rng rng(3);
  auto res = unroll(m, traj, RunMode::train, cfg, &rng);
  CHECK(res.executed_steps == traj.length());
  CHECK(std::isfinite(res.loss_value));
  backward(res.loss, true);
  CHECK(res.stackop_total == 0);  // no stack_op hint in the baseline scheme
}

TEST_CASE("mismatched trajectory is rejected") {
  RunConfig cfg = small_config();
  Model m = build_model(cfg);
  auto traj = sample_trajectory_recursive(from_edges(3, {{0, 1}}));
  traj.graph = from_edges(4, {});  // break the pairing
  CHECK_THROWS_AS(unroll(m, traj, RunMode::eval, cfg, nullptr), InvalidInput);
}

TEST_CASE("checkpoint round-trip restores parameters and optimizer state") {
  RunConfig cfg = small_config();
  Model m = build_model(cfg);
  AdamState adam;
  adam.init(m.params.tensors);
  adam.step_count = 5;
  const auto path = std::filesystem::temp_directory_path() / "nar_ckpt_test.bin";
  CheckpointMeta meta{1234, "{}"};
  save_checkpoint(path, m, &adam, meta);

  Model loaded = build_model(cfg);
  AdamState adam2;
  auto meta2 = load_checkpoint(path, loaded, &adam2);
  CHECK(meta2.config_hash == 1234);
  CHECK(adam2.step_count == 5);
  for (size_t k = 0; k < m.params.tensors.size(); ++k)
    CHECK(loaded.params.tensors[k].values() == m.params.tensors[k].values());

  // architecture mismatch is a state error
  RunConfig other = small_config(StackMode::none);
  Model wrong = build_model(other);
  CHECK_THROWS_AS(load_checkpoint(path, wrong, nullptr), StateMismatch);
}
