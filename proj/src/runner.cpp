#include "nar/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace nar {

void RunConfig::validate() const {
  if (teacher_forcing < 0.0 || teacher_forcing > 1.0)
    throw InvalidInput("run config: teacher_forcing must lie in [0, 1]");
  if (steps < 1) throw InvalidInput("run config: steps must be positive");
  if (batch_size < 1) throw InvalidInput("run config: batch_size must be positive");
  if (eval_every < 1) throw InvalidInput("run config: eval_every must be positive");
  if (lr <= 0.0) throw InvalidInput("run config: learning rate must be positive");
  if (d_h < 1) throw InvalidInput("run config: d_h must be positive");
  if (use_output_collection && scheme != HintScheme::recursive)
    throw InvalidInput("run config: output collection needs the recursive hint scheme");
  if (stack_mode != StackMode::none && scheme != HintScheme::recursive)
    throw InvalidInput("run config: a stack needs the recursive hint scheme");
  if (value_net.kind == ValueKind::slice && stack_mode != StackMode::none && d_h < value_net.d_stack)
    throw InvalidInput("run config: sliced value function requires d_h >= d_stack");
}

ModelConfig RunConfig::model_config() const {
  validate();
  ModelConfig mc;
  mc.scheme = scheme;
  mc.stack_mode = stack_mode;
  mc.use_hidden_state = use_hidden_state;
  mc.use_output_collection = use_output_collection;
  mc.processor.d_h = d_h;
  mc.processor.use_hidden_state = use_hidden_state;
  mc.processor.aggregation = aggregation;
  mc.processor.connectivity = connectivity;
  mc.value_net = value_net;
  mc.init_seed = Rng::derive(seed, fnv1a64("model-init"));
  return mc;
}

Trajectory sample_trajectory(const Graph& g, HintScheme scheme) {
  return scheme == HintScheme::recursive ? sample_trajectory_recursive(g)
                                         : sample_trajectory_baseline(g);
}

namespace {

using Targets = StepTargetsT<float>;
using Inputs = StepInputsT<float>;
using Decoded = DecodedStepT<float>;

// Hard predictions extracted from decoded logits (argmax for categorical and
// pointer hints, raw values for scalars, thresholded logits for masks).
Targets predicted_targets(const std::vector<HintSpec>& specs, const Decoded& decoded,
                          const Targets& truth, int n) {
  Targets out;
  out.indices.resize(specs.size());
  out.values.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    if (spec.role == HintRole::input_only) {
      // Input-only values are never predicted; carry the ground truth.
      out.indices[k] = truth.indices[k];
      out.values[k] = truth.values[k];
      continue;
    }
    const auto& logits = decoded.logits[k];
    switch (spec.type) {
      case HintType::categorical:
        out.indices[k] = spec.loc == HintLoc::graph ? std::vector<int>{argmax(logits)}
                                                    : argmax_rows(logits);
        break;
      case HintType::node_pointer:
        out.indices[k] = spec.loc == HintLoc::graph ? std::vector<int>{argmax(logits)}
                                                    : argmax_rows(logits);
        break;
      case HintType::scalar: {
        auto& v = out.values[k];
        v.assign(logits.values().begin(), logits.values().end());
        break;
      }
      case HintType::mask: {
        auto& v = out.values[k];
        v.resize(logits.size());
        for (int64_t i = 0; i < logits.size(); ++i)
          v[i] = logits.values()[i] > 0.f ? 1.f : 0.f;
        break;
      }
    }
  }
  return out;
}

// Differentiable soft feedback for the next step's inputs.
Inputs soft_inputs(const std::vector<HintSpec>& specs, const Decoded& decoded,
                   const Targets& truth, int n) {
  Inputs out;
  out.dense.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    if (spec.role == HintRole::input_only) {
      out.dense[k] = Tensor::from(step_input_shape<float>(spec, n), truth.values[k]);
      continue;
    }
    const auto& logits = decoded.logits[k];
    switch (spec.type) {
      case HintType::categorical:
        out.dense[k] = spec.loc == HintLoc::graph
                           ? reshape(softmax_rows(logits), {1, spec.categories})
                           : softmax_rows(logits);
        break;
      case HintType::node_pointer:
        if (spec.loc == HintLoc::graph) {
          auto sm = softmax_rows(logits);  // [n] or [n+1]
          if (spec.none_slot) sm = slice(sm, 0, n);
          out.dense[k] = reshape(sm, {n, 1});
        } else {
          out.dense[k] = softmax_rows(logits);
        }
        break;
      case HintType::scalar:
        out.dense[k] = logits;  // [n,1] or [1,1]
        break;
      case HintType::mask:
        out.dense[k] = sigmoid(logits);
        break;
    }
  }
  return out;
}

// Constant logits reproducing the ground truth (perfect-predictor stub).
Decoded stub_decoded(const std::vector<HintSpec>& specs, const Targets& truth, int n) {
  constexpr float kMargin = 8.f;
  Decoded out;
  out.logits.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    if (spec.role == HintRole::input_only) continue;
    switch (spec.type) {
      case HintType::categorical: {
        const int rows = spec.loc == HintLoc::graph ? 1 : n;
        std::vector<float> v(static_cast<size_t>(rows) * spec.categories, -kMargin);
        for (int i = 0; i < rows; ++i) v[i * spec.categories + truth.indices[k][i]] = kMargin;
        out.logits[k] = spec.loc == HintLoc::graph
                            ? Tensor::from({spec.categories}, std::move(v))
                            : Tensor::from({n, spec.categories}, std::move(v));
        break;
      }
      case HintType::node_pointer: {
        if (spec.loc == HintLoc::graph) {
          const int width = spec.none_slot ? n + 1 : n;
          std::vector<float> v(width, -kMargin);
          v[truth.indices[k][0]] = kMargin;
          out.logits[k] = Tensor::from({width}, std::move(v));
        } else {
          std::vector<float> v(static_cast<size_t>(n) * n, -kMargin);
          for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + truth.indices[k][i]] = kMargin;
          out.logits[k] = Tensor::from({n, n}, std::move(v));
        }
        break;
      }
      case HintType::scalar: {
        const int rows = spec.loc == HintLoc::graph ? 1 : n;
        out.logits[k] = Tensor::from({rows, 1}, truth.values[k]);
        break;
      }
      case HintType::mask: {
        std::vector<float> v(truth.values[k].size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = truth.values[k][i] > 0.5f ? kMargin : -kMargin;
        out.logits[k] = Tensor::from({static_cast<int>(v.size()), 1}, std::move(v));
      }
    }
  }
  return out;
}

int find_spec(const std::vector<HintSpec>& specs, const char* name) {
  for (size_t k = 0; k < specs.size(); ++k)
    if (specs[k].name == name) return static_cast<int>(k);
  return -1;
}

}  // namespace

UnrollResult unroll(const Model& model, const Trajectory& traj, RunMode mode,
                    const RunConfig& cfg, Rng* forcing_rng, const UnrollOptions& opts) {
  const Graph& g = traj.graph;
  const int n = g.n;
  const int T = traj.length();
  if (T < 1) throw InvalidInput("unroll: empty trajectory");
  if (!traj.snapshots.empty() && static_cast<int>(traj.snapshots[0].colors.size()) != n)
    throw InvalidInput("unroll: trajectory/graph size mismatch");
  if (mode == RunMode::train && cfg.teacher_forcing > 0.0 && forcing_rng == nullptr)
    throw InvalidInput("unroll: training with forcing requires an rng");

  const auto& specs = model.specs;
  const PairList pairs = build_pairs(g, model.cfg.processor.connectivity);
  const int spec_u = find_spec(specs, "u");
  const int spec_u_pi = find_spec(specs, "u_pi");
  const int spec_stack_op = find_spec(specs, "stack_op");

  UnrollResult res;
  res.table = OutputTable(n);
  res.per_hint_loss.assign(specs.size(), 0.0);

  LatentStackT<float> stack(model.cfg.stack_mode, n, model.cfg.value_net.d_stack);
  Tensor p_prev;
  if (model.cfg.use_hidden_state) p_prev = Tensor::zeros({n, model.d_h()});

  Targets truth = step_targets<float>(traj, 0);
  Inputs inputs =
      step_inputs_from_values(specs, hints_from_targets<float>(specs, truth, n), n);
  Tensor total_loss;
  Tensor last_p_i;

  for (int t = 0; t < T; ++t) {
    if (opts.capture_inputs) {
      HintValuesT<float> snap;
      snap.dense.resize(specs.size());
      for (size_t k = 0; k < specs.size(); ++k) snap.dense[k] = inputs.dense[k].values();
      opts.capture_inputs->push_back(std::move(snap));
    }

    auto step_out = model.step(inputs, pairs, stack.mode() == StackMode::none ? nullptr : &stack.top(),
                               model.cfg.use_hidden_state ? &p_prev : nullptr);
    Decoded decoded = opts.oracle_stub ? stub_decoded(specs, truth, n) : step_out.decoded;

    if (opts.capture_logits) {
      std::vector<std::vector<float>> row;
      for (const auto& l : decoded.logits)
        row.push_back(l.defined() ? l.values() : std::vector<float>{});
      opts.capture_logits->push_back(std::move(row));
    }

    auto loss = hint_loss<float>(specs, decoded, truth);
    for (size_t k = 0; k < specs.size(); ++k) res.per_hint_loss[k] += loss.per_hint[k];
    total_loss = total_loss.defined() ? add(total_loss, loss.total) : loss.total;

    const Targets pred = predicted_targets(specs, decoded, truth, n);

    if (spec_stack_op >= 0) {
      res.stackop_total += 1;
      res.stackop_correct += pred.indices[spec_stack_op][0] == truth.indices[spec_stack_op][0];
    }

    if (model.cfg.use_output_collection && spec_u >= 0 && spec_u_pi >= 0)
      collect_output(res.table, pred.indices[spec_u][0], pred.indices[spec_u_pi][0]);

    // One forcing draw per step governs both the executed stack operation and
    // the inputs handed to the next step.
    bool forced = false;
    if (mode == RunMode::train && forcing_rng != nullptr)
      forced = forcing_rng->bernoulli(cfg.teacher_forcing);

    if (model.cfg.stack_mode != StackMode::none) {
      StackOp op;
      if (opts.oracle_stub || (mode == RunMode::train && forced)) {
        op = static_cast<StackOp>(truth.indices[spec_stack_op][0]);
      } else {
        op = static_cast<StackOp>(pred.indices[spec_stack_op][0]);
      }
      apply_op(stack, op, model.value_net, step_out.p_i, step_out.encoded.h_g);
      if (op == StackOp::push) res.pushes += 1;
      if (op == StackOp::pop) res.pops += 1;
      res.stack_depth_trace.push_back(stack.depth());
      res.max_stack_depth = std::max(res.max_stack_depth, stack.depth());
    }

    if (model.cfg.use_hidden_state) p_prev = step_out.p_i;
    last_p_i = step_out.p_i;
    res.executed_steps += 1;

    if (t + 1 < T) {
      Targets next_truth = step_targets<float>(traj, t + 1);
      if (opts.oracle_stub) {
        inputs = step_inputs_from_values(specs, hints_from_targets<float>(specs, truth, n), n);
      } else if (mode == RunMode::train && forced) {
        inputs = step_inputs_from_values(specs, hints_from_targets<float>(specs, truth, n), n);
      } else if (mode == RunMode::train) {
        inputs = soft_inputs(specs, decoded, truth, n);
      } else {
        inputs = step_inputs_from_values(specs, hints_from_targets<float>(specs, pred, n), n);
      }
      truth = std::move(next_truth);
    }
  }

  total_loss = scale(total_loss, 1.f / static_cast<float>(T));
  for (auto& v : res.per_hint_loss) v /= T;

  if (!model.cfg.use_output_collection) {
    if (opts.oracle_stub) {
      res.table.entries = traj.pi;
    } else {
      auto out_logits = model.output_head(last_p_i);
      res.table.entries = argmax_rows(out_logits);
      total_loss = add(total_loss, softmax_xent_rows(out_logits, traj.pi));
    }
  }
  res.loss = total_loss;
  res.loss_value = total_loss.scalar_value();
  return res;
}

EvalReport evaluate(const Model& model, const std::vector<Graph>& graphs, const RunConfig& cfg,
                    const EvalOptions& opts) {
  NoGradGuard no_grad;
  EvalReport report;
  int so_correct = 0, so_total = 0;
  std::ofstream depth_csv;
  if (!opts.dump_stack_depth.empty()) {
    depth_csv.open(opts.dump_stack_depth);
    depth_csv << "graph,step,depth\n";
  }
  if (!opts.dump_trajectory_dir.empty())
    std::filesystem::create_directories(opts.dump_trajectory_dir);

  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const Trajectory traj = sample_trajectory(graphs[gi], model.cfg.scheme);
    UnrollOptions uo;
    std::vector<std::vector<std::vector<float>>> logits;
    if (!opts.dump_trajectory_dir.empty()) uo.capture_logits = &logits;
    const UnrollResult r = unroll(model, traj, RunMode::eval, cfg, nullptr, uo);
    int hits = 0;
    for (int i = 0; i < graphs[gi].n; ++i) hits += r.table.entries[i] == traj.pi[i];
    report.per_graph_accuracy.push_back(static_cast<double>(hits) / graphs[gi].n);
    so_correct += r.stackop_correct;
    so_total += r.stackop_total;
    if (depth_csv.is_open())
      for (size_t t = 0; t < r.stack_depth_trace.size(); ++t)
        depth_csv << gi << "," << t << "," << r.stack_depth_trace[t] << "\n";
    if (!opts.dump_trajectory_dir.empty()) {
      nlohmann::json j;
      j["graph"] = gi;
      j["n"] = graphs[gi].n;
      j["pi_true"] = traj.pi;
      j["pi_predicted"] = r.table.entries;
      auto& steps = j["steps"] = nlohmann::json::array();
      for (size_t t = 0; t < logits.size(); ++t) {
        nlohmann::json e;
        for (size_t k = 0; k < model.specs.size(); ++k) {
          if (logits[t][k].empty()) continue;
          const auto& spec = model.specs[k];
          if (spec.type == HintType::scalar || spec.type == HintType::mask)
            e[spec.name] = logits[t][k];
          else
            e[spec.name] = argmax(logits[t][k], 0, static_cast<int>(logits[t][k].size()));
        }
        steps.push_back(std::move(e));
      }
      std::ofstream os(opts.dump_trajectory_dir / ("graph_" + std::to_string(gi) + ".json"));
      os << j.dump(2) << "\n";
    }
  }

  const auto& acc = report.per_graph_accuracy;
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean = acc.empty() ? 0.0 : mean / acc.size();
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  report.accuracy_mean = mean;
  report.accuracy_std = acc.empty() ? 0.0 : std::sqrt(var / acc.size());
  report.stackop_accuracy = so_total > 0 ? static_cast<double>(so_correct) / so_total : 0.0;
  return report;
}

long peak_rss_kb() {
  std::ifstream is("/proc/self/status");
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      long kb = 0;
      std::sscanf(line.c_str(), "VmHWM: %ld", &kb);
      return kb;
    }
  }
  return 0;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

TrainResult train(Model& model, const Dataset& dataset, const RunConfig& cfg,
                  const std::filesystem::path& out_dir, const CheckpointMeta& meta) {
  cfg.validate();
  const DatasetSplit* train_split = dataset.find("train");
  const DatasetSplit* val_split = dataset.find("val");
  if (!train_split || train_split->graphs.empty())
    throw InvalidInput("train: dataset has no train split");
  if (!val_split || val_split->graphs.empty())
    throw InvalidInput("train: dataset has no val split");
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.final_checkpoint = out_dir / "final.ckpt";
  result.metrics_csv = out_dir / "metrics.csv";

  std::vector<Tensor>& params = model.params.tensors;
  AdamState adam;
  AdamConfig ac;
  ac.lr = cfg.lr;
  adam.init(params, ac);

  Rng loop_rng(Rng::derive(cfg.seed, fnv1a64("train-loop")));
  std::vector<int> order(train_split->graphs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  loop_rng.shuffle(order);
  size_t cursor = 0;
  auto next_graph = [&]() -> const Graph& {
    if (cursor >= order.size()) {
      loop_rng.shuffle(order);
      cursor = 0;
    }
    return train_split->graphs[order[cursor++]];
  };

  std::ofstream metrics(result.metrics_csv);
  std::ofstream perf(out_dir / "perf.csv");
  metrics << "step,split,accuracy";
  for (const auto& s : model.specs)
    if (s.role == HintRole::hint) metrics << ",loss_" << s.name;
  metrics << ",stackop_accuracy\n";
  perf << "step,wall_ms,peak_rss_kb\n";
  const auto t0 = std::chrono::steady_clock::now();

  // Keep a loadable checkpoint on disk from the start so a divergence abort
  // always leaves a last good state behind.
  save_checkpoint(result.best_checkpoint, model, &adam, meta);

  std::vector<double> hint_loss_accum(model.specs.size(), 0.0);
  int accum_count = 0;
  result.best_val_accuracy = -1.0;

  const float inv_batch = 1.f / static_cast<float>(cfg.batch_size);
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Graph& g = next_graph();
      const Trajectory traj = sample_trajectory(g, cfg.scheme);
      UnrollResult r = unroll(model, traj, RunMode::train, cfg, &loop_rng);
      if (!std::isfinite(r.loss_value)) {
        std::fprintf(stderr, "train: non-finite loss at step %d; aborting with last good checkpoint %s\n",
                     step, result.best_checkpoint.string().c_str());
        throw Divergence("train: non-finite loss at step " + std::to_string(step));
      }
      for (size_t k = 0; k < model.specs.size(); ++k) hint_loss_accum[k] += r.per_hint_loss[k];
      accum_count += 1;
      backward(scale(r.loss, inv_batch), /*release_buffers=*/true);
    }
    try {
      adam_step(params, adam);
    } catch (const Divergence&) {
      std::fprintf(stderr, "train: non-finite gradient at step %d; aborting with last good checkpoint %s\n",
                   step, result.best_checkpoint.string().c_str());
      throw;
    }

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const EvalReport val = evaluate(model, val_split->graphs, cfg);
      metrics << step << ",val," << fmt(val.accuracy_mean);
      for (size_t k = 0; k < model.specs.size(); ++k)
        if (model.specs[k].role == HintRole::hint)
          metrics << "," << fmt(accum_count > 0 ? hint_loss_accum[k] / accum_count : 0.0);
      metrics << "," << fmt(val.stackop_accuracy) << "\n";
      metrics.flush();
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      perf << step << "," << ms << "," << peak_rss_kb() << "\n";
      perf.flush();
      std::fill(hint_loss_accum.begin(), hint_loss_accum.end(), 0.0);
      accum_count = 0;
      if (val.accuracy_mean > result.best_val_accuracy) {
        result.best_val_accuracy = val.accuracy_mean;
        result.best_step = step;
        save_checkpoint(result.best_checkpoint, model, &adam, meta);
      }
    }
    result.steps_run = step;
  }

  save_checkpoint(result.final_checkpoint, model, &adam, meta);
  return result;
}

}  // namespace nar
