#pragma once

// Train/validation/test graph distributions: Erdős–Rényi graphs with the edge
// probability drawn per graph from a fixed set, mixed with a fraction of
// random binary trees. Each graph derives its own seed from (master seed,
// split, index), so generation is order-independent and reproducible.

#include <filesystem>
#include <string>
#include <vector>

#include "nar/graph.hpp"

namespace nar {

struct DatasetSpec {
  std::vector<int> train_sizes = {4, 8, 12, 16, 20, 24, 28, 32};
  int train_count = 1000;
  std::vector<int> val_sizes = {4, 8, 12, 16, 20, 24, 28, 32};
  int val_count = 128;
  std::vector<int> test_sizes = {32, 96};
  int test_count = 128;  // per test size
  double tree_fraction = 0.15;
  std::vector<double> er_probs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  uint64_t seed = 1;

  void validate() const;
};

struct DatasetSplit {
  std::string name;
  std::vector<Graph> graphs;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<DatasetSplit> splits;

  const DatasetSplit* find(const std::string& name) const {
    for (const auto& s : splits)
      if (s.name == name) return &s;
    return nullptr;
  }
};

// Splits: "train", "val", and one "test_<n>" per test size.
Dataset gen_dataset(const DatasetSpec& spec);

// Directory layout: manifest.json plus one record file per split. A record is
// [u32 n][u8 source][f64 p][u64 seed][ceil(n^2/8) adjacency bytes, row-major,
// LSB-first].
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const std::string& text);

}  // namespace nar
