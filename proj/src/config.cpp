#include "nar/config.hpp"

#include "json.hpp"

namespace nar {

namespace {

const char* scheme_name(HintScheme s) {
  return s == HintScheme::recursive ? "recursive" : "baseline";
}
HintScheme scheme_from(const std::string& s) {
  if (s == "recursive") return HintScheme::recursive;
  if (s == "baseline") return HintScheme::baseline;
  throw InvalidInput("config: unknown hint scheme " + s);
}

const char* stack_name(StackMode m) {
  switch (m) {
    case StackMode::none: return "none";
    case StackMode::graph_level: return "graph_level";
    default: return "node_wise";
  }
}
StackMode stack_from(const std::string& s) {
  if (s == "none") return StackMode::none;
  if (s == "graph_level") return StackMode::graph_level;
  if (s == "node_wise") return StackMode::node_wise;
  throw InvalidInput("config: unknown stack mode " + s);
}

const char* agg_name(Aggregation a) { return a == Aggregation::max ? "max" : "sum"; }
Aggregation agg_from(const std::string& s) {
  if (s == "max") return Aggregation::max;
  if (s == "sum") return Aggregation::sum;
  throw InvalidInput("config: unknown aggregation " + s);
}

const char* conn_name(Connectivity c) {
  switch (c) {
    case Connectivity::symmetric: return "symmetric";
    case Connectivity::directed: return "directed";
    default: return "full";
  }
}
Connectivity conn_from(const std::string& s) {
  if (s == "symmetric") return Connectivity::symmetric;
  if (s == "directed") return Connectivity::directed;
  if (s == "full") return Connectivity::full;
  throw InvalidInput("config: unknown connectivity " + s);
}

const char* value_kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::mlp: return "mlp";
    case ValueKind::slice: return "slice";
    default: return "attention";
  }
}
ValueKind value_kind_from(const std::string& s) {
  if (s == "mlp") return ValueKind::mlp;
  if (s == "slice") return ValueKind::slice;
  if (s == "attention") return ValueKind::attention;
  throw InvalidInput("config: unknown value net kind " + s);
}

const char* loc_name(HintLoc l) { return l == HintLoc::node ? "node" : "graph"; }
const char* type_name(HintType t) {
  switch (t) {
    case HintType::categorical: return "categorical";
    case HintType::node_pointer: return "node_pointer";
    case HintType::scalar: return "scalar";
    default: return "mask";
  }
}
const char* role_name(HintRole r) { return r == HintRole::input_only ? "input_only" : "hint"; }

nlohmann::json hints_json(HintScheme scheme) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& spec : hint_scheme_specs(scheme)) {
    nlohmann::json e;
    e["name"] = spec.name;
    e["location"] = loc_name(spec.loc);
    e["type"] = type_name(spec.type);
    e["role"] = role_name(spec.role);
    if (spec.type == HintType::categorical) e["categories"] = spec.categories;
    if (spec.none_slot) e["none_slot"] = true;
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace

std::string config_to_json(const FullConfig& cfg) {
  nlohmann::json j;
  j["dataset"] = nlohmann::json::parse(dataset_spec_to_json(cfg.dataset));
  auto& p = j["processor"];
  p["d_h"] = cfg.run.d_h;
  p["use_hidden_state"] = cfg.run.use_hidden_state;
  p["aggregation"] = agg_name(cfg.run.aggregation);
  p["connectivity"] = conn_name(cfg.run.connectivity);
  auto& v = j["value_net"];
  v["kind"] = value_kind_name(cfg.run.value_net.kind);
  v["d_stack"] = cfg.run.value_net.d_stack;
  v["hidden"] = cfg.run.value_net.hidden;
  v["mean_pool"] = cfg.run.value_net.mean_pool;
  auto& r = j["run"];
  r["scheme"] = scheme_name(cfg.run.scheme);
  r["stack_mode"] = stack_name(cfg.run.stack_mode);
  r["use_output_collection"] = cfg.run.use_output_collection;
  r["teacher_forcing"] = cfg.run.teacher_forcing;
  r["steps"] = cfg.run.steps;
  r["batch_size"] = cfg.run.batch_size;
  r["lr"] = cfg.run.lr;
  r["seed"] = cfg.run.seed;
  r["eval_every"] = cfg.run.eval_every;
  j["hints"] = hints_json(cfg.run.scheme);
  return j.dump(2);
}

FullConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  FullConfig cfg;
  if (j.contains("dataset")) cfg.dataset = dataset_spec_from_json(j["dataset"].dump());
  if (j.contains("processor")) {
    const auto& p = j["processor"];
    if (p.contains("d_h")) cfg.run.d_h = p["d_h"].get<int>();
    if (p.contains("use_hidden_state")) cfg.run.use_hidden_state = p["use_hidden_state"].get<bool>();
    if (p.contains("aggregation")) cfg.run.aggregation = agg_from(p["aggregation"].get<std::string>());
    if (p.contains("connectivity"))
      cfg.run.connectivity = conn_from(p["connectivity"].get<std::string>());
  }
  if (j.contains("value_net")) {
    const auto& v = j["value_net"];
    if (v.contains("kind")) cfg.run.value_net.kind = value_kind_from(v["kind"].get<std::string>());
    if (v.contains("d_stack")) cfg.run.value_net.d_stack = v["d_stack"].get<int>();
    if (v.contains("hidden")) cfg.run.value_net.hidden = v["hidden"].get<int>();
    if (v.contains("mean_pool")) cfg.run.value_net.mean_pool = v["mean_pool"].get<bool>();
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    if (r.contains("scheme")) cfg.run.scheme = scheme_from(r["scheme"].get<std::string>());
    if (r.contains("stack_mode")) cfg.run.stack_mode = stack_from(r["stack_mode"].get<std::string>());
    if (r.contains("use_output_collection"))
      cfg.run.use_output_collection = r["use_output_collection"].get<bool>();
    if (r.contains("teacher_forcing")) cfg.run.teacher_forcing = r["teacher_forcing"].get<double>();
    if (r.contains("steps")) cfg.run.steps = r["steps"].get<int>();
    if (r.contains("batch_size")) cfg.run.batch_size = r["batch_size"].get<int>();
    if (r.contains("lr")) cfg.run.lr = r["lr"].get<double>();
    if (r.contains("seed")) cfg.run.seed = r["seed"].get<uint64_t>();
    if (r.contains("eval_every")) cfg.run.eval_every = r["eval_every"].get<int>();
  }
  return cfg;
}

uint64_t config_hash(const FullConfig& cfg) { return fnv1a64(config_to_json(cfg)); }

namespace {

std::vector<ExperimentPreset> build_presets() {
  std::vector<ExperimentPreset> out;
  auto push = [&](const std::string& name, const std::string& desc, auto mutate) {
    ExperimentPreset p;
    p.name = name;
    p.description = desc;
    RunConfig& r = p.config.run;
    r.scheme = HintScheme::recursive;
    r.stack_mode = StackMode::none;
    r.use_hidden_state = false;
    r.use_output_collection = true;
    r.teacher_forcing = 0.5;
    r.value_net.kind = ValueKind::mlp;
    mutate(r);
    out.push_back(std::move(p));
  };

  push("t3-row1-baseline", "per-node hints, hidden state, final-step output decoding",
       [](RunConfig& r) {
         r.scheme = HintScheme::baseline;
         r.use_hidden_state = true;
         r.use_output_collection = false;
       });
  push("t3-row2-graph-stack", "graph-level stack, learned value net",
       [](RunConfig& r) { r.stack_mode = StackMode::graph_level; });
  push("t3-row3-no-stack", "graph hints only, no stack, no hidden state", [](RunConfig&) {});
  push("t3-row4-graph-stack-hidden", "graph-level stack plus recurrent hidden state",
       [](RunConfig& r) {
         r.stack_mode = StackMode::graph_level;
         r.use_hidden_state = true;
       });
  push("t3-row5-hidden-only", "recurrent hidden state, no stack",
       [](RunConfig& r) { r.use_hidden_state = true; });
  push("t3-row6-no-collection", "graph-level stack, final-step output decoding",
       [](RunConfig& r) {
         r.stack_mode = StackMode::graph_level;
         r.use_output_collection = false;
       });
  push("t3-row7-no-forcing", "graph-level stack, teacher forcing off",
       [](RunConfig& r) {
         r.stack_mode = StackMode::graph_level;
         r.teacher_forcing = 0.0;
       });
  push("t3-row8-slice-value", "graph-level stack, sliced (unlearned) value function",
       [](RunConfig& r) {
         r.stack_mode = StackMode::graph_level;
         r.value_net.kind = ValueKind::slice;
       });
  push("t3-row9-attention", "graph-level stack with attention pooling",
       [](RunConfig& r) {
         r.stack_mode = StackMode::graph_level;
         r.value_net.kind = ValueKind::attention;
       });
  push("t3-row10-nodewise", "node-wise stack",
       [](RunConfig& r) { r.stack_mode = StackMode::node_wise; });
  push("t3-row11-nodewise-hidden", "node-wise stack plus recurrent hidden state",
       [](RunConfig& r) {
         r.stack_mode = StackMode::node_wise;
         r.use_hidden_state = true;
       });
  return out;
}

}  // namespace

const std::vector<ExperimentPreset>& experiment_presets() {
  static const std::vector<ExperimentPreset> presets = build_presets();
  return presets;
}

FullConfig preset_config(const std::string& name) {
  for (const auto& p : experiment_presets())
    if (p.name == name) return p.config;
  throw InvalidInput("unknown preset: " + name);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : experiment_presets()) names.push_back(p.name);
  return names;
}

}  // namespace nar
