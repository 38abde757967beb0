#pragma once

// Versioned binary checkpoint: named parameter tensors plus optimizer state,
// with a header recording the configuration hash and the serialized
// configuration document. Loading verifies names, shapes, and (optionally)
// the config hash; a mismatch is a StateMismatch.

#include <filesystem>
#include <optional>
#include <string>

#include "nar/model.hpp"

namespace nar {

struct CheckpointMeta {
  uint64_t config_hash = 0;
  std::string config_json;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState* adam, const CheckpointMeta& meta);

// Loads parameters (and Adam state when requested and present) into a model
// that was built with the same architecture. Returns the stored metadata.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model& model, AdamState* adam);

// Reads only the metadata header.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace nar
