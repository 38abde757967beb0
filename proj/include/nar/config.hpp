#pragma once

// One declarative configuration document embedding the dataset spec, hint
// table, processor and value-network settings, and the run settings. The
// config hash is stored in checkpoints so evaluation refuses mismatched
// configurations.

#include <string>
#include <vector>

#include "nar/graphgen.hpp"
#include "nar/runner.hpp"

namespace nar {

struct FullConfig {
  DatasetSpec dataset;
  RunConfig run;

  RunConfig resolved_run() const { return run; }
};

std::string config_to_json(const FullConfig& cfg);
FullConfig config_from_json(const std::string& text);
uint64_t config_hash(const FullConfig& cfg);

// Ablation presets: the 11 experiment rows of the stack-vs-no-stack matrix
// (row 1 is the per-node-hint baseline, rows 2-11 the graph-hint variants).
struct ExperimentPreset {
  std::string name;
  std::string description;
  FullConfig config;
};

const std::vector<ExperimentPreset>& experiment_presets();
FullConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace nar
