#pragma once

// Six-scale U-shaped restoration network. Encoder scales 1-3 run at full, 1/2
// and 1/4 resolution with widths C, 2C, 4C; decoder scales 4-6 mirror them.
// Every scale stacks N residual blocks followed by an optional LDIM. Scales 2
// and 3 receive the downsampled input image, and every decoder scale emits a
// restored image that adds the matching downsampled input.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ccnet/blocks.hpp"
#include "ccnet/rsam.hpp"
#include "ccnet/strip_attention.hpp"

namespace ccnet {

enum class BlockType { ersm, drsm, plain, rsam };

inline std::string to_string(BlockType t) {
  switch (t) {
    case BlockType::ersm: return "ersm";
    case BlockType::drsm: return "drsm";
    case BlockType::plain: return "plain";
    case BlockType::rsam: return "rsam";
  }
  return "?";
}

inline BlockType parse_block_type(const std::string& s) {
  if (s == "ersm") return BlockType::ersm;
  if (s == "drsm") return BlockType::drsm;
  if (s == "plain") return BlockType::plain;
  if (s == "rsam") return BlockType::rsam;
  throw ConfigError("unknown block type '" + s + "' (expected ersm, drsm, plain or rsam)");
}

struct ModelConfig {
  std::size_t base_channels = 8;
  std::size_t blocks_per_scale = 2;
  BlockType block_type = BlockType::ersm;
  bool use_ldim = true;
  std::vector<std::size_t> ldim_strips{7, 11};
  std::size_t k_dw = 7;
  std::size_t expansion = 2;
  std::size_t image_channels = 3;

  std::array<std::size_t, 3> widths() const {
    return {base_channels, 2 * base_channels, 4 * base_channels};
  }

  void validate() const {
    if (base_channels == 0) throw ConfigError("base_channels must be positive");
    if (blocks_per_scale < 1) throw ConfigError("blocks_per_scale (N) must be >= 1");
    if (k_dw == 0 || k_dw % 2 == 0) throw ConfigError("k_dw must be odd");
    if (expansion == 0) throw ConfigError("expansion must be positive");
    if (image_channels == 0) throw ConfigError("image_channels must be positive");
    if (use_ldim || block_type == BlockType::rsam) {
      if (ldim_strips.empty()) throw ConfigError("LDIM enabled but no strip sizes given");
      for (std::size_t k : ldim_strips)
        if (k == 0 || k % 2 == 0) throw ConfigError("strip size " + std::to_string(k) + " is not odd");
      if (base_channels < ldim_strips.size()) throw ConfigError("fewer channels than LDIM groups");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels}, {"blocks_per_scale", c.blocks_per_scale},
                     {"block_type", to_string(c.block_type)}, {"use_ldim", c.use_ldim},
                     {"ldim_strips", c.ldim_strips}, {"k_dw", c.k_dw},
                     {"expansion", c.expansion}, {"image_channels", c.image_channels}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.base_channels = j.at("base_channels").get<std::size_t>();
  c.blocks_per_scale = j.at("blocks_per_scale").get<std::size_t>();
  c.block_type = parse_block_type(j.at("block_type").get<std::string>());
  c.use_ldim = j.at("use_ldim").get<bool>();
  c.ldim_strips = j.at("ldim_strips").get<std::vector<std::size_t>>();
  c.k_dw = j.at("k_dw").get<std::size_t>();
  c.expansion = j.at("expansion").get<std::size_t>();
  c.image_channels = j.at("image_channels").get<std::size_t>();
}

template <typename T>
struct Block {
  BlockType type = BlockType::ersm;
  std::variant<BlockParams<T>, PlainBlockParams<T>, RsamParams<T>> params;

  static Block make(const ModelConfig& cfg, std::size_t channels, Rng& rng) {
    Block b;
    b.type = cfg.block_type;
    switch (cfg.block_type) {
      case BlockType::ersm:
      case BlockType::drsm:
        b.params = BlockParams<T>::make(channels, cfg.expansion, cfg.k_dw, rng);
        break;
      case BlockType::plain:
        b.params = PlainBlockParams<T>::make(channels, rng);
        break;
      case BlockType::rsam:
        b.params = RsamParams<T>::make(channels, cfg.expansion, cfg.k_dw, cfg.ldim_strips, rng);
        break;
    }
    return b;
  }

  Var<T> operator()(const Var<T>& x) const {
    switch (type) {
      case BlockType::ersm: return ersm_forward(x, std::get<BlockParams<T>>(params));
      case BlockType::drsm: return drsm_forward(x, std::get<BlockParams<T>>(params));
      case BlockType::plain: return plain_residual_block_forward(x, std::get<PlainBlockParams<T>>(params));
      case BlockType::rsam: return rsam_forward(x, std::get<RsamParams<T>>(params));
    }
    return x;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    std::visit([&](const auto& p) { p.collect(prefix, out); }, params);
  }
  std::size_t param_count() const {
    return std::visit([](const auto& p) { return p.param_count(); }, params);
  }
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    return std::visit([&](const auto& p) { return p.macs(h, w); }, params);
  }
};

/// N blocks followed by an optional LDIM, at one resolution.
template <typename T>
struct ScaleStage {
  std::vector<Block<T>> blocks;
  std::optional<LdimParams<T>> ldim;

  static ScaleStage make(const ModelConfig& cfg, std::size_t channels, Rng& rng) {
    ScaleStage s;
    for (std::size_t i = 0; i < cfg.blocks_per_scale; ++i) s.blocks.push_back(Block<T>::make(cfg, channels, rng));
    if (cfg.use_ldim) s.ldim = LdimParams<T>::make(LdimConfig::split(channels, cfg.ldim_strips), rng);
    return s;
  }

  Var<T> operator()(Var<T> x) const {
    for (const auto& b : blocks) x = b(x);
    if (ldim) x = ldim_forward(x, *ldim);
    return x;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    if (ldim) ldim->collect(prefix + ".ldim", out);
  }
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    std::uint64_t total = ldim ? ldim->macs(h, w) : 0;
    for (const auto& b : blocks) total += b.macs(h, w);
    return total;
  }
};

/// Restored images at full, 1/2 and 1/4 resolution (in that order).
template <typename T>
struct ScaleOutputs {
  std::array<Var<T>, 3> restored;
};

/// Supervision targets matching ScaleOutputs: the clean image and its 2×2
/// average-pooled pyramid.
template <typename T>
std::array<Tensor<T>, 3> make_scale_targets(const Tensor<T>& clean) {
  Tensor<T> half = avg_pool2(clean);
  Tensor<T> quarter = avg_pool2(half);
  return {clean, std::move(half), std::move(quarter)};
}

template <typename T>
struct Model {
  ModelConfig cfg;
  Conv2d<T> stem;
  std::array<ScaleStage<T>, 3> encoder;
  std::array<Conv2d<T>, 2> down;
  std::array<Conv2d<T>, 2> input_stem;  // multi-input: image -> scale width
  std::array<Conv2d<T>, 2> input_fuse;  // 1×1 over [features, injected image features]
  std::array<ScaleStage<T>, 3> decoder;
  std::array<ConvTranspose2d<T>, 2> up;
  std::array<Conv2d<T>, 2> skip_fuse;   // 1×1 over [upsampled, encoder skip]
  std::array<Conv2d<T>, 3> heads;       // quarter, half, full resolution

  ParamList<T> parameters() const {
    ParamList<T> out;
    stem.collect("stem", out);
    for (std::size_t s = 0; s < 3; ++s) encoder[s].collect("enc" + std::to_string(s + 1), out);
    for (std::size_t s = 0; s < 2; ++s) {
      down[s].collect("down" + std::to_string(s + 1), out);
      input_stem[s].collect("input_stem" + std::to_string(s + 2), out);
      input_fuse[s].collect("input_fuse" + std::to_string(s + 2), out);
    }
    for (std::size_t s = 0; s < 3; ++s) decoder[s].collect("dec" + std::to_string(s + 4), out);
    for (std::size_t s = 0; s < 2; ++s) {
      up[s].collect("up" + std::to_string(s + 5), out);
      skip_fuse[s].collect("skip_fuse" + std::to_string(s + 5), out);
    }
    for (std::size_t s = 0; s < 3; ++s) heads[s].collect("head" + std::to_string(s + 4), out);
    return out;
  }
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model<T> m;
  m.cfg = cfg;
  const auto width = cfg.widths();
  const std::size_t img = cfg.image_channels;
  m.stem = Conv2d<T>::same(img, width[0], 3, Init::fan_in_uniform, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    m.encoder[s] = ScaleStage<T>::make(cfg, width[s], rng);
    if (s < 2) {
      m.down[s] = Conv2d<T>(width[s], width[s + 1], 3, ConvOptions{2, 1, 1}, true, Init::fan_in_uniform, rng);
      m.input_stem[s] = Conv2d<T>::same(img, width[s + 1], 3, Init::fan_in_uniform, rng);
      m.input_fuse[s] = Conv2d<T>::same(2 * width[s + 1], width[s + 1], 1, Init::fan_in_uniform, rng);
    }
  }
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t w = width[2 - s];
    if (s > 0) {
      m.up[s - 1] = ConvTranspose2d<T>(2 * w, w, 4, ConvOptions{2, 1, 1}, Init::fan_in_uniform, rng);
      m.skip_fuse[s - 1] = Conv2d<T>::same(2 * w, w, 1, Init::fan_in_uniform, rng);
    }
    m.decoder[s] = ScaleStage<T>::make(cfg, w, rng);
    m.heads[s] = Conv2d<T>::same(w, img, 3, Init::zero, rng);
  }
  return m;
}

template <typename T>
ScaleOutputs<T> forward_multiscale(const Model<T>& m, const Var<T>& image) {
  const Shape& s = image.shape();
  if (s[1] != m.cfg.image_channels) {
    throw InputError("model expects " + std::to_string(m.cfg.image_channels) + " image channels, got " +
                     std::to_string(s[1]));
  }
  if (s[2] % 4 || s[3] % 4 || s[2] == 0 || s[3] == 0) {
    throw InputError("input spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is not divisible by 4");
  }
  Var<T> img2 = avg_pool2(image);
  Var<T> img4 = avg_pool2(img2);
  const std::array<Var<T>, 2> injected{img2, img4};

  std::array<Var<T>, 3> skips;
  Var<T> f = m.stem(image);
  for (std::size_t sc = 0; sc < 3; ++sc) {
    if (sc > 0) {
      f = m.down[sc - 1](f);
      f = m.input_fuse[sc - 1](concat_channels<T>({f, m.input_stem[sc - 1](injected[sc - 1])}));
    }
    f = m.encoder[sc](f);
    skips[sc] = f;
  }

  ScaleOutputs<T> out;
  const std::array<Var<T>, 3> base{img4, img2, image};
  for (std::size_t sc = 0; sc < 3; ++sc) {
    if (sc > 0) {
      f = m.up[sc - 1](f);
      f = m.skip_fuse[sc - 1](concat_channels<T>({f, skips[2 - sc]}));
    }
    f = m.decoder[sc](f);
    out.restored[2 - sc] = add(m.heads[sc](f), base[sc]);
  }
  return out;
}

template <typename T>
ScaleOutputs<T> forward_multiscale(const Model<T>& m, const Tensor<T>& image) {
  return forward_multiscale(m, Var<T>(image));
}

template <typename T>
std::size_t count_parameters(const Model<T>& m) {
  return count_params(m.parameters());
}

/// Multiply-accumulates of one forward pass on a single image_channels×h×w input,
/// counting convolutions and strip-attention taps.
template <typename T>
std::uint64_t count_macs(const Model<T>& m, std::size_t h, std::size_t w) {
  if (h % 4 || w % 4) throw InputError("count_macs: spatial size must be divisible by 4");
  const std::array<std::size_t, 3> hs{h, h / 2, h / 4}, ws{w, w / 2, w / 4};
  std::uint64_t total = m.stem.macs(h, w);
  for (std::size_t s = 0; s < 3; ++s) {
    if (s > 0) {
      total += m.down[s - 1].macs(hs[s], ws[s]);
      total += m.input_stem[s - 1].macs(hs[s], ws[s]);
      total += m.input_fuse[s - 1].macs(hs[s], ws[s]);
    }
    total += m.encoder[s].macs(hs[s], ws[s]);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t r = 2 - s;
    if (s > 0) {
      total += m.up[s - 1].macs(hs[r + 1], ws[r + 1]);
      total += m.skip_fuse[s - 1].macs(hs[r], ws[r]);
    }
    total += m.decoder[s].macs(hs[r], ws[r]);
    total += m.heads[s].macs(hs[r], ws[r]);
  }
  return total;
}

}  // namespace ccnet
