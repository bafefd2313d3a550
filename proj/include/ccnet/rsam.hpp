#pragma once

#include "ccnet/blocks.hpp"
#include "ccnet/strip_attention.hpp"

namespace ccnet {

/// Residual star attention module: CSU, then an LDIM over the expanded
/// features, then the 3×3 refinement back to C channels, under one skip.
template <typename T>
struct RsamParams {
  BlockParams<T> block;
  LdimParams<T> ldim;  // operates on C·e channels

  static RsamParams make(std::size_t channels, std::size_t expansion, std::size_t k_dw,
                         const std::vector<std::size_t>& strips, Rng& rng) {
    RsamParams p;
    p.block = BlockParams<T>::make(channels, expansion, k_dw, rng);
    p.ldim = LdimParams<T>::make(LdimConfig::split(channels * expansion, strips), rng);
    return p;
  }

  std::size_t channels() const { return block.channels(); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    block.collect(prefix, out);
    ldim.collect(prefix + ".ldim", out);
  }
  std::size_t param_count() const { return block.param_count() + ldim.param_count(); }
  std::uint64_t macs(std::size_t h, std::size_t w) const { return block.macs(h, w) + ldim.macs(h, w); }
};

template <typename T>
Var<T> rsam_forward(const Var<T>& x, const RsamParams<T>& p) {
  detail::require_channels(x.shape()[1], p.channels(), "rsam_forward");
  Var<T> x_ln = layer_norm_channels(x, p.block.norm_gain, p.block.norm_bias);
  Var<T> context = ldim_forward(gelu(csu_forward(x_ln, p.block)), p.ldim);
  return add(x, p.block.refine(context));
}

}  // namespace ccnet
