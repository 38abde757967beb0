#include "nar/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace nar {

namespace {

constexpr char kMagic[8] = {'N', 'A', 'R', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
void get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw StateMismatch("checkpoint: truncated file");
}

void put_string(std::ostream& os, const std::string& s) {
  put(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  uint32_t len = 0;
  get(is, len);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw StateMismatch("checkpoint: truncated string");
  return s;
}

void put_floats(std::ostream& os, const std::vector<float>& v) {
  put(os, static_cast<uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> get_floats(std::istream& is) {
  uint64_t len = 0;
  get(is, len);
  std::vector<float> v(len);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(len * sizeof(float)));
  if (!is) throw StateMismatch("checkpoint: truncated tensor data");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamState* adam,
                     const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, static_cast<uint32_t>(1));  // version
  put(os, meta.config_hash);
  put_string(os, meta.config_json);
  put(os, static_cast<uint32_t>(model.params.tensors.size()));
  for (size_t k = 0; k < model.params.tensors.size(); ++k) {
    const auto& t = model.params.tensors[k];
    put_string(os, model.params.names[k]);
    put(os, static_cast<uint8_t>(t.rank()));
    for (int d : t.shape()) put(os, static_cast<int32_t>(d));
    put_floats(os, t.values());
  }
  put(os, static_cast<uint8_t>(adam != nullptr));
  if (adam) {
    put(os, adam->cfg.lr);
    put(os, adam->cfg.beta1);
    put(os, adam->cfg.beta2);
    put(os, adam->cfg.eps);
    put(os, adam->step_count);
    for (size_t k = 0; k < adam->m.size(); ++k) {
      put_floats(os, adam->m[k]);
      put_floats(os, adam->v[k]);
    }
  }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("checkpoint: cannot read " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw StateMismatch("checkpoint: bad magic");
  uint32_t version = 0;
  get(is, version);
  if (version != 1) throw StateMismatch("checkpoint: unsupported version");
  CheckpointMeta meta;
  get(is, meta.config_hash);
  meta.config_json = get_string(is);
  return meta;
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model& model, AdamState* adam) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("checkpoint: cannot read " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw StateMismatch("checkpoint: bad magic");
  uint32_t version = 0;
  get(is, version);
  if (version != 1) throw StateMismatch("checkpoint: unsupported version");
  CheckpointMeta meta;
  get(is, meta.config_hash);
  meta.config_json = get_string(is);

  uint32_t count = 0;
  get(is, count);
  if (count != model.params.tensors.size())
    throw StateMismatch("checkpoint: parameter count mismatch");
  for (uint32_t k = 0; k < count; ++k) {
    const std::string name = get_string(is);
    if (name != model.params.names[k])
      throw StateMismatch("checkpoint: parameter name mismatch at " + name);
    uint8_t rank = 0;
    get(is, rank);
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      int32_t x = 0;
      get(is, x);
      d = x;
    }
    if (shape != model.params.tensors[k].shape())
      throw StateMismatch("checkpoint: shape mismatch at " + name);
    auto data = get_floats(is);
    model.params.tensors[k].mutable_values() = std::move(data);
  }
  uint8_t has_adam = 0;
  get(is, has_adam);
  if (adam) {
    if (!has_adam) throw StateMismatch("checkpoint: optimizer state requested but absent");
    get(is, adam->cfg.lr);
    get(is, adam->cfg.beta1);
    get(is, adam->cfg.beta2);
    get(is, adam->cfg.eps);
    get(is, adam->step_count);
    adam->m.resize(count);
    adam->v.resize(count);
    for (uint32_t k = 0; k < count; ++k) {
      adam->m[k] = get_floats(is);
      adam->v[k] = get_floats(is);
    }
  }
  return meta;
}

}  // namespace nar
