#pragma once

// Residual building blocks: the context-aware star unit (CSU), the efficient
// residual star module (ERSM), its D-RSM ablation twin, and a plain two-conv
// residual block used as the ablation baseline.

#include <cstdint>
#include <string>

#include "ccnet/layers.hpp"

namespace ccnet {

template <typename T>
struct BlockParams {
  Var<T> norm_gain;  // (1, C, 1, 1)
  Var<T> norm_bias;
  Conv2d<T> pw1_a;   // C -> C·e, 1×1, star branch A
  Conv2d<T> pw1_b;   // C -> C·e, 1×1, star branch B
  Conv2d<T> dw;      // C·e depth-wise k_dw × k_dw, no bias
  Conv2d<T> refine;  // C·e -> C, 3×3

  static BlockParams make(std::size_t channels, std::size_t expansion, std::size_t k_dw, Rng& rng) {
    if (channels == 0 || expansion == 0) throw ConfigError("block needs positive channels and expansion");
    if (k_dw % 2 == 0) throw ConfigError("depth-wise kernel size must be odd");
    const std::size_t hidden = channels * expansion;
    BlockParams p;
    p.norm_gain = Var<T>(Tensor<T>({1, channels, 1, 1}, T(1)), true);
    p.norm_bias = Var<T>(Tensor<T>({1, channels, 1, 1}), true);
    p.pw1_a = Conv2d<T>::same(channels, hidden, 1, Init::fan_in_uniform, rng);
    p.pw1_b = Conv2d<T>::same(channels, hidden, 1, Init::fan_in_uniform, rng);
    p.dw = Conv2d<T>(hidden, hidden, k_dw, ConvOptions{1, k_dw / 2, hidden}, false,
                     Init::fan_in_uniform, rng);
    p.refine = Conv2d<T>::same(hidden, channels, 3, Init::small_normal, rng);
    return p;
  }

  std::size_t channels() const { return norm_gain.size(); }
  std::size_t hidden_channels() const { return pw1_a.out_channels(); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".norm.gain", norm_gain});
    out.push_back({prefix + ".norm.bias", norm_bias});
    pw1_a.collect(prefix + ".pw1_a", out);
    pw1_b.collect(prefix + ".pw1_b", out);
    dw.collect(prefix + ".dw", out);
    refine.collect(prefix + ".refine", out);
  }

  std::size_t param_count() const {
    return norm_gain.size() + norm_bias.size() + pw1_a.param_count() + pw1_b.param_count() +
           dw.param_count() + refine.param_count();
  }

  /// ERSM and D-RSM run the same convolutions, only in a different order.
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    return pw1_a.macs(h, w) + pw1_b.macs(h, w) + dw.macs(h, w) + refine.macs(h, w);
  }
};

/// Baseline residual block: x + conv3(GELU(conv3(x))).
template <typename T>
struct PlainBlockParams {
  Conv2d<T> conv1;
  Conv2d<T> conv2;

  static PlainBlockParams make(std::size_t channels, Rng& rng) {
    PlainBlockParams p;
    p.conv1 = Conv2d<T>::same(channels, channels, 3, Init::fan_in_uniform, rng);
    p.conv2 = Conv2d<T>::same(channels, channels, 3, Init::small_normal, rng);
    return p;
  }

  std::size_t channels() const { return conv1.in_channels(); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
  }
  std::size_t param_count() const { return conv1.param_count() + conv2.param_count(); }
  std::uint64_t macs(std::size_t h, std::size_t w) const { return conv1.macs(h, w) + conv2.macs(h, w); }
};

namespace detail {

inline void require_channels(std::size_t got, std::size_t expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": input has " + std::to_string(got) +
                         " channels, block expects " + std::to_string(expected));
  }
}

}  // namespace detail

/// Star unit with spatial context: pw_a(x) ⊙ GELU(dw(pw_b(x))).
template <typename T>
Var<T> csu_forward(const Var<T>& x_ln, const BlockParams<T>& p) {
  detail::require_channels(x_ln.shape()[1], p.channels(), "csu_forward");
  Var<T> branch_a = p.pw1_a(x_ln);
  Var<T> branch_b = gelu(p.dw(p.pw1_b(x_ln)));
  return mul(branch_a, branch_b);
}

template <typename T>
Var<T> ersm_forward(const Var<T>& x, const BlockParams<T>& p) {
  detail::require_channels(x.shape()[1], p.channels(), "ersm_forward");
  Var<T> x_ln = layer_norm_channels(x, p.norm_gain, p.norm_bias);
  return add(x, p.refine(gelu(csu_forward(x_ln, p))));
}

/// D-RSM: plain star unit pw_a(x) ⊙ GELU(pw_b(x)); the depth-wise conv moves
/// after the product. Same parameters as ERSM.
template <typename T>
Var<T> drsm_forward(const Var<T>& x, const BlockParams<T>& p) {
  detail::require_channels(x.shape()[1], p.channels(), "drsm_forward");
  Var<T> x_ln = layer_norm_channels(x, p.norm_gain, p.norm_bias);
  Var<T> star = mul(p.pw1_a(x_ln), gelu(p.pw1_b(x_ln)));
  return add(x, p.refine(gelu(p.dw(star))));
}

template <typename T>
Var<T> plain_residual_block_forward(const Var<T>& x, const PlainBlockParams<T>& p) {
  detail::require_channels(x.shape()[1], p.channels(), "plain_residual_block_forward");
  return add(x, p.conv2(gelu(p.conv1(x))));
}

}  // namespace ccnet
