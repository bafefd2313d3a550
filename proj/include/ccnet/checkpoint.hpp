#pragma once

// Checkpoint directory layout:
//   manifest.json          configs, digests, counters, tensor names and shapes
//   params/<name>.bin      parameter values
//   adam_m/<name>.bin      Adam first moments
//   adam_v/<name>.bin      Adam second moments
// Each blob: "CCNT", u32 version, u32 element bytes, u32 rank (4), u64 dims[4],
// then the raw little-endian elements.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccnet/backbone.hpp"
#include "ccnet/optim.hpp"

namespace ccnet {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

inline constexpr std::uint32_t kBlobVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline std::string config_digest(const ModelConfig& cfg) { return hex64(fnv1a(nlohmann::json(cfg).dump())); }
inline std::string config_digest(const TrainConfig& cfg) { return hex64(fnv1a(nlohmann::json(cfg).dump())); }

template <typename T>
struct Checkpoint {
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  std::uint64_t iteration = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> params;
  AdamState<T> adam;

  bool operator==(const Checkpoint& o) const {
    return model_cfg == o.model_cfg && train_cfg == o.train_cfg && iteration == o.iteration &&
           names == o.names && params == o.params && adam.m == o.adam.m &&
           adam.v == o.adam.v && adam.step == o.adam.step;
  }
};

template <typename T>
Checkpoint<T> capture_checkpoint(const Model<T>& model, const AdamState<T>& adam, const TrainConfig& train_cfg,
                                 std::uint64_t iteration) {
  Checkpoint<T> ck;
  ck.model_cfg = model.cfg;
  ck.train_cfg = train_cfg;
  ck.iteration = iteration;
  for (const auto& p : model.parameters()) {
    ck.names.push_back(p.name);
    ck.params.push_back(p.var.value());
  }
  ck.adam = adam;
  return ck;
}

/// Copies parameter values into `model` and returns the optimizer state.
/// The model must have been built from the checkpoint's configuration.
template <typename T>
AdamState<T> restore_checkpoint(const Checkpoint<T>& ck, Model<T>& model) {
  if (config_digest(model.cfg) != config_digest(ck.model_cfg)) {
    throw ConfigError("checkpoint model config digest " + config_digest(ck.model_cfg) +
                      " does not match the model's " + config_digest(model.cfg));
  }
  auto params = model.parameters();
  if (params.size() != ck.params.size()) throw ConfigError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ck.names[i]) {
      throw ConfigError("checkpoint parameter '" + ck.names[i] + "' where '" + params[i].name + "' expected");
    }
    params[i].var.value().require_same_shape(ck.params[i], "restore_checkpoint");
    params[i].var.mutable_value() = ck.params[i];
  }
  return ck.adam;
}

namespace detail {

template <typename T>
void write_blob(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint32_t header[3] = {kBlobVersion, static_cast<std::uint32_t>(sizeof(T)), 4};
  os.write("CCNT", 4);
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw IoError("failed writing " + path.string());
}

template <typename T>
Tensor<T> read_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t header[3];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(header), sizeof header);
  if (!is || std::memcmp(magic, "CCNT", 4) != 0) throw IoError(path.string() + " is not a tensor blob");
  if (header[0] != kBlobVersion) throw IoError(path.string() + ": unsupported blob version");
  if (header[1] != sizeof(T)) throw IoError(path.string() + ": element size mismatch");
  if (header[2] != 4) throw IoError(path.string() + ": expected rank 4");
  Shape shape{};
  for (auto& d : shape) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    d = static_cast<std::size_t>(v);
  }
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!is) throw IoError(path.string() + ": truncated blob");
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes");
  return t;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint<T>& ck) {
  namespace fs = std::filesystem;
  for (const char* sub : {"params", "adam_m", "adam_v"}) fs::create_directories(dir / sub);
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    const std::string file = ck.names[i] + ".bin";
    detail::write_blob(dir / "params" / file, ck.params[i]);
    detail::write_blob(dir / "adam_m" / file, ck.adam.m.at(i));
    detail::write_blob(dir / "adam_v" / file, ck.adam.v.at(i));
    const Shape& s = ck.params[i].shape();
    tensors.push_back({{"name", ck.names[i]}, {"shape", {s[0], s[1], s[2], s[3]}}});
  }
  nlohmann::json manifest = {
      {"format", "ccnet-checkpoint"},
      {"element_bytes", sizeof(T)},
      {"iteration", ck.iteration},
      {"adam_step", ck.adam.step},
      {"model_config", ck.model_cfg},
      {"train_config", ck.train_cfg},
      {"model_digest", config_digest(ck.model_cfg)},
      {"train_digest", config_digest(ck.train_cfg)},
      {"tensors", tensors},
  };
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

/// Loads a checkpoint. When `expected` is given, its digest must match the
/// stored model configuration.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir, const ModelConfig* expected = nullptr) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("no checkpoint manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  if (m.value("format", "") != "ccnet-checkpoint") throw IoError(dir.string() + " is not a checkpoint");
  if (m.at("element_bytes").get<std::size_t>() != sizeof(T)) throw IoError("checkpoint element size mismatch");
  Checkpoint<T> ck;
  ck.model_cfg = m.at("model_config").get<ModelConfig>();
  ck.train_cfg = m.at("train_config").get<TrainConfig>();
  if (m.at("model_digest").get<std::string>() != config_digest(ck.model_cfg) ||
      m.at("train_digest").get<std::string>() != config_digest(ck.train_cfg)) {
    throw ConfigError("checkpoint config digest does not match its stored configuration");
  }
  if (expected && config_digest(*expected) != config_digest(ck.model_cfg)) {
    throw ConfigError("checkpoint model digest " + config_digest(ck.model_cfg) + " != expected " +
                      config_digest(*expected));
  }
  ck.iteration = m.at("iteration").get<std::uint64_t>();
  ck.adam.step = m.at("adam_step").get<std::uint64_t>();
  for (const auto& t : m.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const std::string file = name + ".bin";
    ck.names.push_back(name);
    ck.params.push_back(detail::read_blob<T>(dir / "params" / file));
    ck.adam.m.push_back(detail::read_blob<T>(dir / "adam_m" / file));
    ck.adam.v.push_back(detail::read_blob<T>(dir / "adam_v" / file));
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 4 || !std::equal(shape.begin(), shape.end(), ck.params.back().shape().begin())) {
      throw IoError("checkpoint tensor '" + name + "' shape disagrees with manifest");
    }
  }
  return ck;
}

}  // namespace ccnet
