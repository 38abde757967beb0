#pragma once

// Recurrent unroll around the model: per step, encode hint inputs plus the
// stack top (and optional hidden state), process, decode, accumulate hint
// losses against the ground truth, execute the stack operation, and update
// the output table from the predicted current node and predecessor. Training
// teacher-forces whole steps with a per-step coin; evaluation always feeds
// back predictions (hard argmax values) and runs exactly the ground-truth
// trajectory length.

#include <filesystem>
#include <vector>

#include "nar/checkpoint.hpp"
#include "nar/graphgen.hpp"
#include "nar/model.hpp"

namespace nar {

struct RunConfig {
  HintScheme scheme = HintScheme::recursive;
  StackMode stack_mode = StackMode::none;
  bool use_hidden_state = false;
  bool use_output_collection = true;
  double teacher_forcing = 0.5;
  int steps = 20000;
  int batch_size = 32;
  double lr = 1e-3;
  uint64_t seed = 1;
  int eval_every = 100;
  int d_h = 128;
  Aggregation aggregation = Aggregation::max;
  Connectivity connectivity = Connectivity::symmetric;
  ValueNetConfig value_net;

  void validate() const;
  ModelConfig model_config() const;
};

// Per-node predecessor table; starts as the identity (every node its own
// predecessor) and is overwritten entry by entry as the unroll proceeds.
struct OutputTable {
  std::vector<int> entries;

  explicit OutputTable(int n = 0) {
    entries.resize(n);
    for (int i = 0; i < n; ++i) entries[i] = i;
  }
};

// table[u] := u_pi; all other entries unchanged.
inline void collect_output(OutputTable& table, int u, int u_pi) { table.entries[u] = u_pi; }

enum class RunMode { train, eval };

struct UnrollOptions {
  // Replace decoder outputs with ground truth (perfect-predictor stub).
  bool oracle_stub = false;
  // Capture the dense hint inputs fed at each step.
  std::vector<HintValuesT<float>>* capture_inputs = nullptr;
  // Capture decoded logit values per step (aligned with the spec list).
  std::vector<std::vector<std::vector<float>>>* capture_logits = nullptr;
};

struct UnrollResult {
  Tensor loss;             // scalar tensor on the tape (train mode)
  double loss_value = 0.0;
  std::vector<double> per_hint_loss;  // mean over steps, aligned with specs
  OutputTable table;
  int stackop_correct = 0;
  int stackop_total = 0;
  int executed_steps = 0;
  int max_stack_depth = 0;
  std::vector<int> stack_depth_trace;  // depth after each step
  int pushes = 0, pops = 0;            // executed push/pop counts
};

UnrollResult unroll(const Model& model, const Trajectory& traj, RunMode mode,
                    const RunConfig& cfg, Rng* forcing_rng, const UnrollOptions& opts = {});

Trajectory sample_trajectory(const Graph& g, HintScheme scheme);

struct EvalOptions {
  std::filesystem::path dump_trajectory_dir;  // per-graph JSON of predictions
  std::filesystem::path dump_stack_depth;     // CSV: graph,step,depth
};

struct EvalReport {
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // per-graph standard deviation
  double stackop_accuracy = 0.0;
  std::vector<double> per_graph_accuracy;
};

EvalReport evaluate(const Model& model, const std::vector<Graph>& graphs, const RunConfig& cfg,
                    const EvalOptions& opts = {});

struct TrainResult {
  double best_val_accuracy = 0.0;
  int best_step = 0;
  int steps_run = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
};

// Adam over shuffled batches with gradient accumulation across batch members;
// validation accuracy every eval_every steps with the best checkpoint
// retained. Metric rows are deterministic for a fixed config and seed;
// wall-clock and memory go to a separate perf.csv. A non-finite loss aborts
// with Divergence after the last good checkpoint is on disk.
TrainResult train(Model& model, const Dataset& dataset, const RunConfig& cfg,
                  const std::filesystem::path& out_dir, const CheckpointMeta& meta);

long peak_rss_kb();

}  // namespace nar
