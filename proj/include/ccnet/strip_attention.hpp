#pragma once

// Dynamic strip attention: per-pixel K-tap weights predicted from the
// features, applied along one axis (optionally dilated), composed into the
// large dynamic strip integration (SA then dilated SA) and the full large
// dynamic integration module over channel groups.

#include <cstdint>
#include <string>
#include <vector>

#include "ccnet/layers.hpp"

namespace ccnet {

/// Per-location strip weights, values (N, K, H, W), shared by the channels of
/// one group.
template <typename T>
struct StripWeights {
  Var<T> values;
  std::size_t strip = 1;
  std::size_t group_id = 0;
};

struct StripGroup {
  std::size_t channels = 0;
  std::size_t strip = 1;
  std::size_t dilation() const { return (strip + 1) / 2; }
};

/// Channel groups of an LDIM, each with its own strip size K and dilation (K+1)/2.
struct LdimConfig {
  std::vector<StripGroup> groups;

  /// Splits `channels` evenly over the strip sizes; earlier groups absorb the remainder.
  static LdimConfig split(std::size_t channels, const std::vector<std::size_t>& strips) {
    if (strips.empty()) throw ConfigError("LDIM needs at least one strip size");
    if (channels < strips.size()) {
      throw ConfigError("LDIM: " + std::to_string(channels) + " channels cannot feed " +
                        std::to_string(strips.size()) + " groups");
    }
    LdimConfig cfg;
    const std::size_t base = channels / strips.size(), extra = channels % strips.size();
    for (std::size_t i = 0; i < strips.size(); ++i) {
      cfg.groups.push_back({base + (i < extra ? 1 : 0), strips[i]});
    }
    cfg.validate(channels);
    return cfg;
  }

  std::size_t channels() const {
    std::size_t c = 0;
    for (const auto& g : groups) c += g.channels;
    return c;
  }

  void validate(std::size_t expected_channels) const {
    if (groups.empty()) throw ConfigError("LDIM has no channel groups");
    for (const auto& g : groups) {
      if (g.channels == 0) throw ConfigError("LDIM group with zero channels");
      if (g.strip == 0 || g.strip % 2 == 0) {
        throw ConfigError("strip size K must be odd and positive, got " + std::to_string(g.strip));
      }
    }
    if (channels() != expected_channels) {
      throw ConfigError("LDIM channel split sums to " + std::to_string(channels()) + ", module has " +
                        std::to_string(expected_channels));
    }
  }
};

/// One-dimensional extent of SA followed by DSA with dilation (K+1)/2.
inline std::size_t receptive_extent(std::size_t strip) {
  if (strip == 0 || strip % 2 == 0) throw ConfigError("strip size K must be odd and positive");
  return strip + ((strip + 1) / 2) * (strip - 1);
}

/// Pointwise conv (group channels -> K) followed by a softmax over K.
template <typename T>
StripWeights<T> generate_strip_weights(const Var<T>& x, const Conv2d<T>& generator, std::size_t strip,
                                       std::size_t group_id = 0) {
  if (strip == 0 || strip % 2 == 0) {
    throw ConfigError("strip size K must be odd and positive, got " + std::to_string(strip));
  }
  if (generator.out_channels() != strip || generator.kernel() != 1) {
    throw ConfigError("strip weight generator must be a 1x1 conv producing K channels");
  }
  return {softmax_channels(generator(x)), strip, group_id};
}

/// out[n,c,y,x] = Σ_k a[n,k,y,x] · in[n,c, pos_k], pos_k shifted by (k - K/2)·dilation
/// along `axis`; taps outside the image read zero.
template <typename T>
Var<T> strip_apply(const Var<T>& x, const StripWeights<T>& weights, Axis axis, std::size_t dilation) {
  if (dilation < 1) throw ConfigError("strip dilation must be >= 1");
  const Var<T>& a = weights.values;
  const Tensor<T>& in = x.value();
  const Tensor<T>& aw = a.value();
  const std::size_t K = aw.c();
  if (K % 2 == 0 || K != weights.strip) throw ConfigError("strip weights must carry an odd K");
  if (aw.n() != in.n() || aw.h() != in.h() || aw.w() != in.w()) {
    throw DimensionError("strip weights " + shape_str(aw.shape()) + " do not cover input " +
                         shape_str(in.shape()));
  }
  const auto H = static_cast<std::ptrdiff_t>(in.h()), W = static_cast<std::ptrdiff_t>(in.w());
  const auto half = static_cast<std::ptrdiff_t>(K / 2), d = static_cast<std::ptrdiff_t>(dilation);

  // Calls body(k, y, x_lo, x_hi, dy, dx): for output row y and columns [x_lo, x_hi)
  // the tap k reads input row y + dy, column x + dx.
  auto for_taps = [=](auto&& body) {
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
      const std::ptrdiff_t off = (k - half) * d;
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        if (axis == Axis::horizontal) {
          const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-off, 0, W);
          const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - off, lo, W);
          body(k, y, lo, hi, 0, off);
        } else {
          if (y + off < 0 || y + off >= H) continue;
          body(k, y, 0, W, off, 0);
        }
      }
    }
  };

  Tensor<T> out(in.shape());
  for (std::size_t n = 0; n < in.n(); ++n)
    for (std::size_t c = 0; c < in.c(); ++c) {
      const T* src = in.plane(n, c);
      T* dst = out.plane(n, c);
      for_taps([&](std::ptrdiff_t k, std::ptrdiff_t y, std::ptrdiff_t lo, std::ptrdiff_t hi,
                   std::ptrdiff_t dy, std::ptrdiff_t dx) {
        const T* ar = aw.plane(n, static_cast<std::size_t>(k)) + y * W;
        const T* xr = src + (y + dy) * W + dx;
        T* o = dst + y * W;
        for (std::ptrdiff_t i = lo; i < hi; ++i) o[i] += ar[i] * xr[i];
      });
    }

  return record<T>(std::move(out), {x, a}, [for_taps, W](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    auto& px = self.parents[0];
    auto& pa = self.parents[1];
    const Tensor<T>& in = px->value;
    const Tensor<T>& aw = pa->value;
    for (std::size_t n = 0; n < g.n(); ++n)
      for (std::size_t c = 0; c < g.c(); ++c) {
        const T* gp = g.plane(n, c);
        const T* src = in.plane(n, c);
        T* gx = needs_grad(px) ? px->grad_buffer().plane(n, c) : nullptr;
        for_taps([&](std::ptrdiff_t k, std::ptrdiff_t y, std::ptrdiff_t lo, std::ptrdiff_t hi,
                     std::ptrdiff_t dy, std::ptrdiff_t dx) {
          const T* gr = gp + y * W;
          if (gx) {
            const T* ar = aw.plane(n, static_cast<std::size_t>(k)) + y * W;
            T* xr = gx + (y + dy) * W + dx;
            for (std::ptrdiff_t i = lo; i < hi; ++i) xr[i] += ar[i] * gr[i];
          }
          if (needs_grad(pa)) {
            T* da = pa->grad_buffer().plane(n, static_cast<std::size_t>(k)) + y * W;
            const T* xr = src + (y + dy) * W + dx;
            for (std::ptrdiff_t i = lo; i < hi; ++i) da[i] += gr[i] * xr[i];
          }
        });
      }
  });
}

/// Weight generators of one large dynamic strip integration along one axis.
template <typename T>
struct LdsiParams {
  Conv2d<T> sa;   // plain strip attention
  Conv2d<T> dsa;  // dilated strip attention

  static LdsiParams make(std::size_t channels, std::size_t strip, Rng& rng) {
    LdsiParams p;
    p.sa = Conv2d<T>::same(channels, strip, 1, Init::fan_in_uniform, rng);
    p.dsa = Conv2d<T>::same(channels, strip, 1, Init::fan_in_uniform, rng);
    return p;
  }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    sa.collect(prefix + ".sa", out);
    dsa.collect(prefix + ".dsa", out);
  }
  std::size_t param_count() const { return sa.param_count() + dsa.param_count(); }
};

/// SA (dilation 1) then DSA (dilation (K+1)/2) along `axis`, each stage with
/// weights generated from its own input.
template <typename T>
Var<T> ldsi_forward(const Var<T>& x, const LdsiParams<T>& p, Axis axis, std::size_t strip,
                    std::size_t group_id = 0) {
  const std::size_t dr = (strip + 1) / 2;
  Var<T> first = strip_apply(x, generate_strip_weights(x, p.sa, strip, group_id), axis, 1);
  return strip_apply(first, generate_strip_weights(first, p.dsa, strip, group_id), axis, dr);
}

template <typename T>
struct LdimGroupParams {
  LdsiParams<T> horizontal;
  LdsiParams<T> vertical;
};

template <typename T>
struct LdimParams {
  LdimConfig cfg;
  std::vector<LdimGroupParams<T>> groups;

  static LdimParams make(const LdimConfig& cfg, Rng& rng) {
    cfg.validate(cfg.channels());
    LdimParams p;
    p.cfg = cfg;
    for (const auto& g : cfg.groups) {
      LdimGroupParams<T> gp;
      gp.horizontal = LdsiParams<T>::make(g.channels, g.strip, rng);
      gp.vertical = LdsiParams<T>::make(g.channels, g.strip, rng);
      p.groups.push_back(std::move(gp));
    }
    return p;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::string g = prefix + ".g" + std::to_string(i);
      groups[i].horizontal.collect(g + ".h", out);
      groups[i].vertical.collect(g + ".v", out);
    }
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.horizontal.param_count() + g.vertical.param_count();
    return n;
  }

  /// Four generators (C_g·K each) and four strip stages (K each) per output element.
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    std::uint64_t total = 0;
    for (const auto& g : cfg.groups) {
      total += 4 * conv_macs(g.strip, g.channels, 1, h, w);
      total += 4 * static_cast<std::uint64_t>(g.strip) * g.channels * h * w;
    }
    return total;
  }
};

/// x + V-LDSI(H-LDSI(x)) evaluated independently on each channel group.
template <typename T>
Var<T> ldim_forward(const Var<T>& x, const LdimParams<T>& p) {
  p.cfg.validate(x.shape()[1]);
  std::vector<Var<T>> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i < p.cfg.groups.size(); ++i) {
    const StripGroup& g = p.cfg.groups[i];
    Var<T> part = slice_channels(x, start, g.channels);
    part = ldsi_forward(part, p.groups[i].horizontal, Axis::horizontal, g.strip, i);
    part = ldsi_forward(part, p.groups[i].vertical, Axis::vertical, g.strip, i);
    parts.push_back(std::move(part));
    start += g.channels;
  }
  Var<T> mixed = parts.size() == 1 ? parts.front() : concat_channels(parts);
  return add(x, mixed);
}

}  // namespace ccnet
