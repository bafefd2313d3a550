#pragma once

// Parameter containers shared by every module: convolutions, transposed
// convolutions, and the named-parameter registry used by the optimizer,
// checkpointing and parameter counting.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ccnet/ops.hpp"

namespace ccnet {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

enum class Init {
  fan_in_uniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
  small_normal,    // N(0, 0.02) weights, zero bias
  zero,
};

namespace detail {

template <typename T>
Var<T> make_param(Shape shape, Init init, std::size_t fan_in, Rng& rng, bool is_bias) {
  Tensor<T> t(shape);
  switch (init) {
    case Init::fan_in_uniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::small_normal: {
      if (is_bias) break;
      std::normal_distribution<double> dist(0.0, 0.02);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::zero:
      break;
  }
  return Var<T>(std::move(t), true);
}

}  // namespace detail

inline std::uint64_t conv_macs(std::size_t cout, std::size_t cin_per_group, std::size_t k,
                               std::size_t hout, std::size_t wout) {
  return static_cast<std::uint64_t>(cout) * cin_per_group * k * k * hout * wout;
}

/// Convolution layer. Depth-wise when groups == in == out.
template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;  // undefined when the layer has no bias
  ConvOptions opt;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, ConvOptions o, bool with_bias, Init init, Rng& rng)
      : opt(o) {
    const std::size_t per_group = in / o.groups;
    weight = detail::make_param<T>({out, per_group, k, k}, init, per_group * k * k, rng, false);
    if (with_bias) bias = detail::make_param<T>({1, out, 1, 1}, init, per_group * k * k, rng, true);
  }

  /// "Same" convolution: padding k/2, stride 1.
  static Conv2d same(std::size_t in, std::size_t out, std::size_t k, Init init, Rng& rng,
                     bool with_bias = true) {
    return Conv2d(in, out, k, ConvOptions{1, k / 2, 1}, with_bias, init, rng);
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, opt); }

  std::size_t in_channels() const { return weight.shape()[1] * opt.groups; }
  std::size_t out_channels() const { return weight.shape()[0]; }
  std::size_t kernel() const { return weight.shape()[2]; }

  std::size_t param_count() const { return weight.size() + (bias.defined() ? bias.size() : 0); }
  std::uint64_t macs(std::size_t hout, std::size_t wout) const {
    return conv_macs(out_channels(), weight.shape()[1], kernel(), hout, wout);
  }
  std::size_t out_size(std::size_t in) const { return (in + 2 * opt.padding - kernel()) / opt.stride + 1; }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
  }
};

/// Transposed convolution layer, weight (in, out, k, k).
template <typename T>
struct ConvTranspose2d {
  Var<T> weight;
  Var<T> bias;
  ConvOptions opt;

  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, std::size_t k, ConvOptions o, Init init, Rng& rng)
      : opt(o) {
    weight = detail::make_param<T>({in, out, k, k}, init, out * k * k, rng, false);
    bias = detail::make_param<T>({1, out, 1, 1}, init, out * k * k, rng, true);
  }

  Var<T> operator()(const Var<T>& x) const { return conv_transpose2d(x, weight, bias, opt); }

  std::size_t param_count() const { return weight.size() + bias.size(); }
  /// Every input element scatters into Cout·k² outputs.
  std::uint64_t macs(std::size_t hin, std::size_t win) const {
    const Shape& s = weight.shape();
    return conv_macs(s[1], s[0], s[2], hin, win);
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
std::size_t count_params(const ParamList<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.var.size();
  return total;
}

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

}  // namespace ccnet
