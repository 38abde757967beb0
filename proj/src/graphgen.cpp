#include "nar/graphgen.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace nar {

void DatasetSpec::validate() const {
  if (tree_fraction < 0.0 || tree_fraction > 1.0)
    throw InvalidInput("dataset spec: tree_fraction must lie in [0, 1]");
  if (train_count < 0 || val_count < 0 || test_count < 0)
    throw InvalidInput("dataset spec: negative split count");
  if (er_probs.empty()) throw InvalidInput("dataset spec: er_probs must be non-empty");
  for (double p : er_probs)
    if (p < 0.0 || p > 1.0) throw InvalidInput("dataset spec: edge probability outside [0, 1]");
  auto check_sizes = [](const std::vector<int>& sizes, const char* which) {
    if (sizes.empty()) throw InvalidInput(std::string("dataset spec: empty size list for ") + which);
    for (int n : sizes)
      if (n < 1) throw InvalidInput(std::string("dataset spec: size below 1 in ") + which);
  };
  check_sizes(train_sizes, "train");
  check_sizes(val_sizes, "val");
  check_sizes(test_sizes, "test");
}

namespace {

std::vector<Graph> gen_split(const DatasetSpec& spec, const std::string& name,
                             const std::vector<int>& sizes, int count) {
  std::vector<Graph> out;
  out.reserve(count);
  const uint64_t split_seed = Rng::derive(spec.seed, fnv1a64(name));
  const int tree_count = static_cast<int>(std::ceil(count * spec.tree_fraction));
  for (int i = 0; i < count; ++i) {
    const uint64_t gseed = Rng::derive(split_seed, static_cast<uint64_t>(i));
    Rng rng(gseed);
    const int n = sizes[rng.below(sizes.size())];
    if (i < tree_count) {
      out.push_back(gen_binary_tree(n, Rng::derive(gseed, 0x7265e5)));
    } else {
      const double p = spec.er_probs[rng.below(spec.er_probs.size())];
      out.push_back(gen_er(n, p, Rng::derive(gseed, 0xe4e4)));
    }
  }
  return out;
}

}  // namespace

Dataset gen_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.splits.push_back({"train", gen_split(spec, "train", spec.train_sizes, spec.train_count)});
  ds.splits.push_back({"val", gen_split(spec, "val", spec.val_sizes, spec.val_count)});
  for (int n : spec.test_sizes) {
    const std::string name = "test_" + std::to_string(n);
    ds.splits.push_back({name, gen_split(spec, name, {n}, spec.test_count)});
  }
  return ds;
}

namespace {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw InvalidInput("dataset: truncated record file");
}

void write_graph(std::ostream& os, const Graph& g) {
  write_pod(os, static_cast<uint32_t>(g.n));
  write_pod(os, static_cast<uint8_t>(g.source));
  write_pod(os, g.p);
  write_pod(os, g.seed);
  const size_t bits = static_cast<size_t>(g.n) * g.n;
  std::vector<uint8_t> packed((bits + 7) / 8, 0);
  for (size_t k = 0; k < bits; ++k)
    if (g.adj[k]) packed[k / 8] |= static_cast<uint8_t>(1u << (k % 8));
  os.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

Graph read_graph(std::istream& is) {
  Graph g;
  uint32_t n = 0;
  uint8_t src = 0;
  read_pod(is, n);
  read_pod(is, src);
  read_pod(is, g.p);
  read_pod(is, g.seed);
  g.n = static_cast<int>(n);
  g.source = static_cast<Graph::Source>(src);
  const size_t bits = static_cast<size_t>(g.n) * g.n;
  std::vector<uint8_t> packed((bits + 7) / 8);
  is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!is) throw InvalidInput("dataset: truncated adjacency block");
  g.adj.assign(bits, 0);
  for (size_t k = 0; k < bits; ++k)
    g.adj[k] = (packed[k / 8] >> (k % 8)) & 1u;
  return g;
}

nlohmann::json spec_json(const DatasetSpec& spec) {
  nlohmann::json j;
  j["train_sizes"] = spec.train_sizes;
  j["train_count"] = spec.train_count;
  j["val_sizes"] = spec.val_sizes;
  j["val_count"] = spec.val_count;
  j["test_sizes"] = spec.test_sizes;
  j["test_count"] = spec.test_count;
  j["tree_fraction"] = spec.tree_fraction;
  j["er_probs"] = spec.er_probs;
  j["seed"] = spec.seed;
  return j;
}

DatasetSpec spec_from(const nlohmann::json& j) {
  DatasetSpec spec;
  if (j.contains("train_sizes")) spec.train_sizes = j["train_sizes"].get<std::vector<int>>();
  if (j.contains("train_count")) spec.train_count = j["train_count"].get<int>();
  if (j.contains("val_sizes")) spec.val_sizes = j["val_sizes"].get<std::vector<int>>();
  if (j.contains("val_count")) spec.val_count = j["val_count"].get<int>();
  if (j.contains("test_sizes")) spec.test_sizes = j["test_sizes"].get<std::vector<int>>();
  if (j.contains("test_count")) spec.test_count = j["test_count"].get<int>();
  if (j.contains("tree_fraction")) spec.tree_fraction = j["tree_fraction"].get<double>();
  if (j.contains("er_probs")) spec.er_probs = j["er_probs"].get<std::vector<double>>();
  if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
  return spec;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["spec"] = spec_json(ds.spec);
  auto& splits = manifest["splits"] = nlohmann::json::array();
  for (const auto& split : ds.splits) {
    const std::string file = split.name + ".bin";
    std::ofstream os(dir / file, std::ios::binary);
    if (!os) throw InvalidInput("dataset: cannot write " + (dir / file).string());
    for (const auto& g : split.graphs) write_graph(os, g);
    nlohmann::json e;
    e["name"] = split.name;
    e["file"] = file;
    e["count"] = split.graphs.size();
    splits.push_back(std::move(e));
  }
  std::ofstream ms(dir / "manifest.json");
  ms << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw InvalidInput("dataset: missing manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(ms);
  Dataset ds;
  ds.spec = spec_from(manifest.at("spec"));
  for (const auto& e : manifest.at("splits")) {
    DatasetSplit split;
    split.name = e.at("name").get<std::string>();
    const auto file = dir / e.at("file").get<std::string>();
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InvalidInput("dataset: missing record file " + file.string());
    const size_t count = e.at("count").get<size_t>();
    split.graphs.reserve(count);
    for (size_t i = 0; i < count; ++i) split.graphs.push_back(read_graph(is));
    ds.splits.push_back(std::move(split));
  }
  return ds;
}

std::string dataset_spec_to_json(const DatasetSpec& spec) { return spec_json(spec).dump(2); }

DatasetSpec dataset_spec_from_json(const std::string& text) {
  return spec_from(nlohmann::json::parse(text));
}

}  // namespace nar
