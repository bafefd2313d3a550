#pragma once

// Run configuration: profile/task defaults, an INI file, then per-key
// overrides, resolved in that order. The resolved config prints back to INI
// and re-parses to the same value.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ccnet/backbone.hpp"
#include "ccnet/data_synth.hpp"
#include "ccnet/optim.hpp"

namespace ccnet {

enum class Profile { desk, paper };
enum class Task { dehaze, deblur, desnow };

inline std::string to_string(Profile p) { return p == Profile::desk ? "desk" : "paper"; }
inline std::string to_string(Task t) {
  switch (t) {
    case Task::dehaze: return "dehaze";
    case Task::deblur: return "deblur";
    case Task::desnow: return "desnow";
  }
  return "?";
}

inline Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::desk;
  if (s == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + s + "' (expected desk or paper)");
}

inline Task parse_task(const std::string& s) {
  if (s == "dehaze") return Task::dehaze;
  if (s == "deblur") return Task::deblur;
  if (s == "desnow") return Task::desnow;
  throw ConfigError("unknown task '" + s + "' (expected dehaze, deblur or desnow)");
}

inline DegradationKind task_degradation(Task t) {
  switch (t) {
    case Task::dehaze: return DegradationKind::haze;
    case Task::deblur: return DegradationKind::motion_blur;
    case Task::desnow: return DegradationKind::snow;
  }
  return DegradationKind::haze;
}

/// Blocks per scale used for each task at paper scale.
inline std::size_t paper_blocks_per_scale(Task t) {
  switch (t) {
    case Task::dehaze: return 3;
    case Task::deblur: return 15;
    case Task::desnow: return 5;
  }
  return 3;
}

struct DataConfig {
  std::string dataset;    // existing dataset directory; empty = synthesize in memory
  std::string clean_dir;  // optional clean PNG sources for synthesis
  std::size_t count = 16;
  std::size_t image_size = 64;
  bool randomize = true;  // per-image degradation parameters drawn from their ranges

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  Profile profile = Profile::desk;
  Task task = Task::dehaze;
  std::uint64_t seed = 0;
  std::string out;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  DegradationSpec degradation() const {
    DegradationSpec s;
    s.kind = task_degradation(task);
    return s;
  }

  void validate() const {
    model.validate();
    train.validate();
    if (data.image_size < train.patch) throw ConfigError("data.image_size must be >= train.patch");
    if (!data.dataset.empty() && !std::filesystem::is_directory(data.dataset)) {
      throw ConfigError("dataset directory not found: " + data.dataset);
    }
    if (!data.clean_dir.empty() && !std::filesystem::is_directory(data.clean_dir)) {
      throw ConfigError("clean image directory not found: " + data.clean_dir);
    }
  }

  bool operator==(const RunConfig&) const = default;
};

inline RunConfig profile_defaults(Profile profile, Task task) {
  RunConfig c;
  c.profile = profile;
  c.task = task;
  if (profile == Profile::paper) {
    c.model.base_channels = 38;
    c.model.blocks_per_scale = paper_blocks_per_scale(task);
    c.train.patch = 256;
    c.data.image_size = 256;
  } else {
    // 1e-4 underfits a 2000-iteration budget from scratch.
    c.train.lr_max = 1e-3;
  }
  return c;
}

/// Default output root: $CCNET_OUT, else ./runs.
inline std::string default_out_root() {
  const char* env = std::getenv("CCNET_OUT");
  return (env && *env) ? env : "runs";
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(trim(text));
  V v{};
  if constexpr (std::is_same_v<V, bool>) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
  } else if constexpr (std::is_same_v<V, std::string>) {
    return trim(text);
  } else {
    if constexpr (std::is_unsigned_v<V>) {
      if (trim(text).starts_with("-")) throw ConfigError("config key '" + key + "' must be non-negative");
    }
    is >> v;
    if (!is || !(is >> std::ws).eof()) {
      throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return v;
  }
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<std::size_t>(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Sets one "section.key" field from its text form.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_value;
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>>
      setters = {
          {"run.profile", [](RunConfig& c, auto&, auto& v) { c.profile = parse_profile(detail::trim(v)); }},
          {"run.task", [](RunConfig& c, auto&, auto& v) { c.task = parse_task(detail::trim(v)); }},
          {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.seed = parse_value<std::uint64_t>(k, v); }},
          {"run.out", [](RunConfig& c, auto& k, auto& v) { c.out = parse_value<std::string>(k, v); }},
          {"model.base_channels", [](RunConfig& c, auto& k, auto& v) { c.model.base_channels = parse_value<std::size_t>(k, v); }},
          {"model.blocks_per_scale", [](RunConfig& c, auto& k, auto& v) { c.model.blocks_per_scale = parse_value<std::size_t>(k, v); }},
          {"model.block_type", [](RunConfig& c, auto&, auto& v) { c.model.block_type = parse_block_type(detail::trim(v)); }},
          {"model.use_ldim", [](RunConfig& c, auto& k, auto& v) { c.model.use_ldim = parse_value<bool>(k, v); }},
          {"model.ldim_strips", [](RunConfig& c, auto& k, auto& v) { c.model.ldim_strips = detail::parse_list(k, v); }},
          {"model.k_dw", [](RunConfig& c, auto& k, auto& v) { c.model.k_dw = parse_value<std::size_t>(k, v); }},
          {"model.expansion", [](RunConfig& c, auto& k, auto& v) { c.model.expansion = parse_value<std::size_t>(k, v); }},
          {"train.lr_max", [](RunConfig& c, auto& k, auto& v) { c.train.lr_max = parse_value<double>(k, v); }},
          {"train.lr_min", [](RunConfig& c, auto& k, auto& v) { c.train.lr_min = parse_value<double>(k, v); }},
          {"train.beta1", [](RunConfig& c, auto& k, auto& v) { c.train.beta1 = parse_value<double>(k, v); }},
          {"train.beta2", [](RunConfig& c, auto& k, auto& v) { c.train.beta2 = parse_value<double>(k, v); }},
          {"train.eps", [](RunConfig& c, auto& k, auto& v) { c.train.eps = parse_value<double>(k, v); }},
          {"train.batch", [](RunConfig& c, auto& k, auto& v) { c.train.batch = parse_value<std::size_t>(k, v); }},
          {"train.iterations", [](RunConfig& c, auto& k, auto& v) { c.train.iterations = parse_value<std::size_t>(k, v); }},
          {"train.eval_every", [](RunConfig& c, auto& k, auto& v) { c.train.eval_every = parse_value<std::size_t>(k, v); }},
          {"train.patch", [](RunConfig& c, auto& k, auto& v) { c.train.patch = parse_value<std::size_t>(k, v); }},
          {"train.hflip_prob", [](RunConfig& c, auto& k, auto& v) { c.train.hflip_prob = parse_value<double>(k, v); }},
          {"train.lambda", [](RunConfig& c, auto& k, auto& v) { c.train.lambda = parse_value<double>(k, v); }},
          {"data.dataset", [](RunConfig& c, auto& k, auto& v) { c.data.dataset = parse_value<std::string>(k, v); }},
          {"data.clean_dir", [](RunConfig& c, auto& k, auto& v) { c.data.clean_dir = parse_value<std::string>(k, v); }},
          {"data.count", [](RunConfig& c, auto& k, auto& v) { c.data.count = parse_value<std::size_t>(k, v); }},
          {"data.image_size", [](RunConfig& c, auto& k, auto& v) { c.data.image_size = parse_value<std::size_t>(k, v); }},
          {"data.randomize", [](RunConfig& c, auto& k, auto& v) { c.data.randomize = parse_value<bool>(k, v); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, value);
}

using Settings = std::vector<std::pair<std::string, std::string>>;

inline Settings read_ini_settings(std::istream& is, const std::string& origin) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed config " + origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  Settings out;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config " + origin + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) out.emplace_back(section + "." + key, value.data());
  }
  return out;
}

inline Settings read_ini_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return read_ini_settings(is, path.string());
}

/// Parses "section.key=value".
inline std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + text + "' is not of the form section.key=value");
  return {detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1))};
}

/// Profile and task are looked up first (overrides beat the file), their
/// defaults are instantiated, then file settings and overrides are applied.
inline RunConfig resolve_config(const Settings& file, const Settings& overrides) {
  Profile profile = Profile::desk;
  Task task = Task::dehaze;
  for (const Settings* s : {&file, &overrides})
    for (const auto& [k, v] : *s) {
      if (k == "run.profile") profile = parse_profile(detail::trim(v));
      if (k == "run.task") task = parse_task(detail::trim(v));
    }
  RunConfig c = profile_defaults(profile, task);
  for (const Settings* s : {&file, &overrides})
    for (const auto& [k, v] : *s) apply_setting(c, k, v);
  c.train.seed = c.seed;
  return c;
}

inline std::string to_ini(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  os << "[run]\n"
     << "profile = " << to_string(c.profile) << "\n"
     << "task = " << to_string(c.task) << "\n"
     << "seed = " << c.seed << "\n"
     << "out = " << c.out << "\n\n"
     << "[model]\n"
     << "base_channels = " << c.model.base_channels << "\n"
     << "blocks_per_scale = " << c.model.blocks_per_scale << "\n"
     << "block_type = " << to_string(c.model.block_type) << "\n"
     << "use_ldim = " << (c.model.use_ldim ? "true" : "false") << "\n"
     << "ldim_strips = " << detail::join(c.model.ldim_strips) << "\n"
     << "k_dw = " << c.model.k_dw << "\n"
     << "expansion = " << c.model.expansion << "\n\n"
     << "[train]\n"
     << "lr_max = " << format_double(c.train.lr_max) << "\n"
     << "lr_min = " << format_double(c.train.lr_min) << "\n"
     << "beta1 = " << format_double(c.train.beta1) << "\n"
     << "beta2 = " << format_double(c.train.beta2) << "\n"
     << "eps = " << format_double(c.train.eps) << "\n"
     << "batch = " << c.train.batch << "\n"
     << "iterations = " << c.train.iterations << "\n"
     << "eval_every = " << c.train.eval_every << "\n"
     << "patch = " << c.train.patch << "\n"
     << "hflip_prob = " << format_double(c.train.hflip_prob) << "\n"
     << "lambda = " << format_double(c.train.lambda) << "\n\n"
     << "[data]\n"
     << "dataset = " << c.data.dataset << "\n"
     << "clean_dir = " << c.data.clean_dir << "\n"
     << "count = " << c.data.count << "\n"
     << "image_size = " << c.data.image_size << "\n"
     << "randomize = " << (c.data.randomize ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace ccnet
