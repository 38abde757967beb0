// Command-line entry points: dataset generation, training, evaluation, and
// the ablation matrix. Exit codes: 0 success, 2 invalid input, 3 state
// mismatch, 4 numerical divergence.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nar/config.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw nar::InvalidInput("cannot read file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path resolve_out(const std::string& flag_value, const char* fallback) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("NAR_OUT_DIR")) return env;
  return fallback;
}

struct CommonTrainArgs {
  std::string data_dir;
  std::string preset = "t3-row10-nodewise";
  std::string config_path;
  std::string out_dir;
  int steps = -1;
  int batch = -1;
  int eval_every = -1;
  double lr = -1.0;
  double forcing = -1.0;
  int64_t seed = -1;
};

nar::FullConfig resolve_config(const CommonTrainArgs& a) {
  nar::FullConfig cfg =
      a.config_path.empty() ? nar::preset_config(a.preset) : nar::config_from_json(read_file(a.config_path));
  if (a.steps > 0) cfg.run.steps = a.steps;
  if (a.batch > 0) cfg.run.batch_size = a.batch;
  if (a.eval_every > 0) cfg.run.eval_every = a.eval_every;
  if (a.lr > 0) cfg.run.lr = a.lr;
  if (a.forcing >= 0) cfg.run.teacher_forcing = a.forcing;
  if (a.seed >= 0) cfg.run.seed = static_cast<uint64_t>(a.seed);
  return cfg;
}

nar::TrainResult run_training(const nar::FullConfig& cfg, const nar::Dataset& ds,
                              const std::filesystem::path& out_dir) {
  nar::Model model = nar::Model::build(cfg.run.model_config());
  nar::CheckpointMeta meta{nar::config_hash(cfg), nar::config_to_json(cfg)};
  return nar::train(model, ds, cfg.run, out_dir, meta);
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_flag, int64_t seed) {
  nar::DatasetSpec spec;
  if (!spec_path.empty()) spec = nar::dataset_spec_from_json(read_file(spec_path));
  if (seed >= 0) spec.seed = static_cast<uint64_t>(seed);
  spec.validate();
  const auto out = resolve_out(out_flag, "dataset");
  const nar::Dataset ds = nar::gen_dataset(spec);
  nar::save_dataset(ds, out);
  std::printf("wrote %s (", (out / "manifest.json").string().c_str());
  for (size_t i = 0; i < ds.splits.size(); ++i)
    std::printf("%s%s: %zu", i ? ", " : "", ds.splits[i].name.c_str(), ds.splits[i].graphs.size());
  std::printf(")\n");
  return 0;
}

int cmd_train(const CommonTrainArgs& args) {
  const nar::FullConfig cfg = resolve_config(args);
  const nar::Dataset ds = nar::load_dataset(args.data_dir);
  const auto out = resolve_out(args.out_dir, "run");
  const auto result = run_training(cfg, ds, out);
  std::printf("best validation accuracy %.4f at step %d\n", result.best_val_accuracy,
              result.best_step);
  std::printf("checkpoints: %s (best), %s (final)\n", result.best_checkpoint.string().c_str(),
              result.final_checkpoint.string().c_str());
  std::printf("metrics: %s\n", result.metrics_csv.string().c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& config_path, const std::string& sizes_csv,
             const std::string& dump_traj, const std::string& dump_depth) {
  const nar::CheckpointMeta meta = nar::read_checkpoint_meta(ckpt_path);
  nar::FullConfig cfg = nar::config_from_json(meta.config_json);
  if (nar::config_hash(cfg) != meta.config_hash)
    throw nar::StateMismatch("eval: checkpoint config hash does not match its embedded config");
  if (!config_path.empty()) {
    const nar::FullConfig user_cfg = nar::config_from_json(read_file(config_path));
    if (nar::config_hash(user_cfg) != meta.config_hash)
      throw nar::StateMismatch("eval: supplied config does not match the checkpoint");
  }

  nar::Model model = nar::Model::build(cfg.run.model_config());
  nar::load_checkpoint(ckpt_path, model, nullptr);
  const nar::Dataset ds = nar::load_dataset(data_dir);

  std::vector<int> sizes;
  {
    std::stringstream ss(sizes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
  }
  for (int n : sizes) {
    const auto* split = ds.find("test_" + std::to_string(n));
    if (!split) throw nar::InvalidInput("eval: dataset has no split test_" + std::to_string(n));
    nar::EvalOptions opts;
    if (!dump_traj.empty())
      opts.dump_trajectory_dir = std::filesystem::path(dump_traj) / ("n" + std::to_string(n));
    if (!dump_depth.empty())
      opts.dump_stack_depth = dump_depth + ".n" + std::to_string(n) + ".csv";
    const auto report = nar::evaluate(model, split->graphs, cfg.run, opts);
    std::printf("test_%d: accuracy %.4f +/- %.4f (stack_op accuracy %.4f, %zu graphs)\n", n,
                report.accuracy_mean, report.accuracy_std, report.stackop_accuracy,
                report.per_graph_accuracy.size());
  }
  return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& rows_csv,
               const std::string& out_flag, const CommonTrainArgs& overrides) {
  std::vector<std::string> rows;
  if (rows_csv == "all") {
    rows = nar::preset_names();
  } else {
    std::stringstream ss(rows_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) rows.push_back(tok);
  }
  const nar::Dataset ds = nar::load_dataset(data_dir);
  const auto out = resolve_out(out_flag, "ablation");
  std::filesystem::create_directories(out);
  std::ofstream csv(out / "ablation.csv");
  csv << "preset,graph_stack,node_stack,hidden_state,output_collection,teacher_forcing,"
         "value_net,accuracy";
  for (const auto& split : ds.splits)
    if (split.name.rfind("test_", 0) == 0) csv << "," << split.name << "_mean," << split.name << "_std";
  csv << "\n";

  for (const auto& name : rows) {
    CommonTrainArgs args = overrides;
    args.preset = name;
    args.config_path.clear();
    nar::FullConfig cfg = resolve_config(args);
    const auto run_dir = out / name;
    std::printf("== %s\n", name.c_str());
    const auto result = run_training(cfg, ds, run_dir);
    nar::Model model = nar::Model::build(cfg.run.model_config());
    nar::load_checkpoint(result.best_checkpoint, model, nullptr);
    csv << name << "," << (cfg.run.stack_mode == nar::StackMode::graph_level ? 1 : 0) << ","
        << (cfg.run.stack_mode == nar::StackMode::node_wise ? 1 : 0) << ","
        << (cfg.run.use_hidden_state ? 1 : 0) << "," << (cfg.run.use_output_collection ? 1 : 0)
        << "," << cfg.run.teacher_forcing << ","
        << (cfg.run.stack_mode == nar::StackMode::none
                ? "n/a"
                : (cfg.run.value_net.kind == nar::ValueKind::mlp
                       ? "mlp"
                       : (cfg.run.value_net.kind == nar::ValueKind::slice ? "slice" : "attention")))
        << "," << result.best_val_accuracy;
    for (const auto& split : ds.splits) {
      if (split.name.rfind("test_", 0) != 0) continue;
      const auto report = nar::evaluate(model, split.graphs, cfg.run);
      csv << "," << report.accuracy_mean << "," << report.accuracy_std;
      std::printf("  %s: %.4f +/- %.4f\n", split.name.c_str(), report.accuracy_mean,
                  report.accuracy_std);
    }
    csv << "\n";
    csv.flush();
  }
  std::printf("wrote %s\n", (out / "ablation.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stack-augmented neural DFS runner"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a graph dataset");
  std::string gen_spec, gen_out;
  int64_t gen_seed = -1;
  gen->add_option("--spec", gen_spec, "dataset spec JSON file");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "master seed override");

  auto* tr = app.add_subcommand("train", "train a model");
  CommonTrainArgs targs;
  tr->add_option("--data", targs.data_dir, "dataset directory")->required();
  tr->add_option("--preset", targs.preset, "experiment preset name");
  tr->add_option("--config", targs.config_path, "config JSON file (overrides preset)");
  tr->add_option("--out", targs.out_dir, "output directory");
  tr->add_option("--steps", targs.steps, "optimizer steps");
  tr->add_option("--batch", targs.batch, "batch size");
  tr->add_option("--eval-every", targs.eval_every, "validation interval");
  tr->add_option("--lr", targs.lr, "learning rate");
  tr->add_option("--forcing", targs.forcing, "teacher forcing probability");
  tr->add_option("--seed", targs.seed, "run seed");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_config, ev_sizes = "32,96", ev_dump_traj, ev_dump_depth;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--config", ev_config, "config JSON to verify against the checkpoint");
  ev->add_option("--sizes", ev_sizes, "comma-separated test sizes");
  ev->add_option("--dump-trajectory", ev_dump_traj, "directory for per-step prediction JSON");
  ev->add_option("--dump-stack-depth", ev_dump_depth, "CSV path prefix for stack depth traces");

  auto* ab = app.add_subcommand("ablate", "run a list of presets and emit a results CSV");
  CommonTrainArgs aargs;
  std::string ab_rows = "all", ab_out;
  ab->add_option("--data", aargs.data_dir, "dataset directory")->required();
  ab->add_option("--rows", ab_rows, "comma-separated preset names or 'all'");
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--steps", aargs.steps, "optimizer steps override");
  ab->add_option("--batch", aargs.batch, "batch size override");
  ab->add_option("--eval-every", aargs.eval_every, "validation interval override");
  ab->add_option("--lr", aargs.lr, "learning rate override");
  ab->add_option("--seed", aargs.seed, "run seed override");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, gen_seed);
    if (tr->parsed()) return cmd_train(targs);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_config, ev_sizes, ev_dump_traj, ev_dump_depth);
    if (ab->parsed()) return cmd_ablate(aargs.data_dir, ab_rows, ab_out, aargs);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const nar::StateMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const nar::Divergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const nar::InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
