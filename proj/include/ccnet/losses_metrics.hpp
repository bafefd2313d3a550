#pragma once

// Dual-domain L1 training loss (pixel space + 2-D DFT) and the PSNR / SSIM
// evaluation metrics.

#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "ccnet/backbone.hpp"
#include "ccnet/ops.hpp"

namespace ccnet {

namespace detail {

/// In-place unnormalized forward 2-D DFT of an h×w row-major plane.
template <typename T>
void fft2(std::vector<std::complex<T>>& plane, std::size_t h, std::size_t w) {
  Eigen::FFT<T> fft;
  std::vector<std::complex<T>> src(std::max(h, w)), dst;
  for (std::size_t y = 0; y < h; ++y) {
    src.assign(plane.begin() + y * w, plane.begin() + (y + 1) * w);
    fft.fwd(dst, src);
    std::copy(dst.begin(), dst.end(), plane.begin() + y * w);
  }
  src.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) src[y] = plane[y * w + x];
    fft.fwd(dst, src);
    for (std::size_t y = 0; y < h; ++y) plane[y * w + x] = dst[y];
  }
}

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

}  // namespace detail

/// (1/S) Σ |pred - target| with S the element count.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  pred.value().require_same_shape(target, "l1_loss");
  const T inv_s = T(1) / static_cast<T>(target.size());
  T acc{0};
  for (std::size_t i = 0; i < target.size(); ++i) acc += std::abs(pred.value()[i] - target[i]);
  return record<T>(Tensor<T>({1, 1, 1, 1}, acc * inv_s), {pred}, [target, inv_s](Node<T>& self) {
    const T g = self.grad[0] * inv_s;
    const Tensor<T>& p = self.parents[0]->value;
    T* d = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < target.size(); ++i) d[i] += g * detail::sign(p[i] - target[i]);
  });
}

/// (1/S) Σ (|Re ΔF| + |Im ΔF|) where ΔF is the per-channel 2-D DFT of pred - target.
template <typename T>
Var<T> fft_l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  pred.value().require_same_shape(target, "fft_l1_loss");
  const std::size_t H = target.h(), W = target.w(), HW = H * W;
  const T inv_s = T(1) / static_cast<T>(target.size());
  // Per-plane subgradient seeds sign(Re) - i·sign(Im), kept for the backward pass.
  std::vector<std::complex<T>> seeds(target.size());
  std::vector<std::complex<T>> plane(HW);
  T acc{0};
  for (std::size_t n = 0; n < target.n(); ++n)
    for (std::size_t c = 0; c < target.c(); ++c) {
      const T* p = pred.value().plane(n, c);
      const T* t = target.plane(n, c);
      for (std::size_t i = 0; i < HW; ++i) plane[i] = {p[i] - t[i], T(0)};
      detail::fft2(plane, H, W);
      std::complex<T>* s = seeds.data() + (n * target.c() + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        acc += std::abs(plane[i].real()) + std::abs(plane[i].imag());
        s[i] = {detail::sign(plane[i].real()), -detail::sign(plane[i].imag())};
      }
    }
  return record<T>(Tensor<T>({1, 1, 1, 1}, acc * inv_s), {pred},
                   [seeds = std::move(seeds), H, W, inv_s](Node<T>& self) {
    // d/dx Σ_k s_r[k]·Re F[k] + s_i[k]·Im F[k] = Re(F(s_r - i·s_i)) for real x.
    const T g = self.grad[0] * inv_s;
    Tensor<T>& d = self.parents[0]->grad_buffer();
    const std::size_t HW = H * W;
    std::vector<std::complex<T>> plane(HW);
    for (std::size_t n = 0; n < d.n(); ++n)
      for (std::size_t c = 0; c < d.c(); ++c) {
        const std::complex<T>* s = seeds.data() + (n * d.c() + c) * HW;
        std::copy(s, s + HW, plane.begin());
        detail::fft2(plane, H, W);
        T* dp = d.plane(n, c);
        for (std::size_t i = 0; i < HW; ++i) dp[i] += g * plane[i].real();
      }
  });
}

template <typename T>
struct LossTerms {
  Var<T> spatial;
  Var<T> frequency;
  Var<T> total;
  T lambda{0};

  T spatial_value() const { return spatial.value()[0]; }
  T frequency_value() const { return frequency.value()[0]; }
  T total_value() const { return total.value()[0]; }
};

/// L = L_s + λ·L_f, each term summed over the given scales and normalized per
/// scale by that scale's element count.
template <typename T>
LossTerms<T> dual_domain_loss(std::span<const Var<T>> preds, std::span<const Tensor<T>> targets, T lambda) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw DimensionError("dual_domain_loss: prediction/target scale count mismatch");
  }
  if (!(lambda >= T(0))) throw ConfigError("dual_domain_loss: lambda must be non-negative");
  LossTerms<T> terms;
  terms.lambda = lambda;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Var<T> ls = l1_loss(preds[i], targets[i]);
    Var<T> lf = fft_l1_loss(preds[i], targets[i]);
    terms.spatial = terms.spatial.defined() ? add(terms.spatial, ls) : ls;
    terms.frequency = terms.frequency.defined() ? add(terms.frequency, lf) : lf;
  }
  terms.total = add(terms.spatial, scale(terms.frequency, lambda));
  return terms;
}

template <typename T>
LossTerms<T> dual_domain_loss(const ScaleOutputs<T>& pred, const std::array<Tensor<T>, 3>& targets,
                              T lambda = T(0.1)) {
  return dual_domain_loss<T>(std::span<const Var<T>>(pred.restored),
                             std::span<const Tensor<T>>(targets), lambda);
}

/// 10·log10(peak² / MSE); +infinity when the images are identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  a.require_same_shape(b, "psnr");
  if (a.size() == 0) throw InputError("psnr of empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of an h×w plane.
inline std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                        const std::vector<double>& g) {
  const std::size_t k = g.size(), ho = h - k + 1, wo = w - k + 1;
  std::vector<double> tmp(h * wo, 0.0), out(ho * wo, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * in[y * w + x + i];
      tmp[y * wo + x] = acc;
    }
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * tmp[(y + i) * wo + x];
      out[y * wo + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean local SSIM with a Gaussian window, computed per channel (and image)
/// and averaged. Only windows fully inside the image contribute.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& opt = {}) {
  a.require_same_shape(b, "ssim");
  const std::size_t H = a.h(), W = a.w();
  if (H < opt.window || W < opt.window) {
    throw InputError("ssim needs images of at least " + std::to_string(opt.window) + " pixels per side");
  }
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const auto g = detail::gaussian_window(opt.window, opt.sigma);
  const std::size_t HW = H * W;
  std::vector<double> pa(HW), pb(HW), aa(HW), bb(HW), ab(HW);
  double total = 0.0;
  std::size_t planes = 0;
  for (std::size_t n = 0; n < a.n(); ++n)
    for (std::size_t c = 0; c < a.c(); ++c) {
      const T* x = a.plane(n, c);
      const T* y = b.plane(n, c);
      for (std::size_t i = 0; i < HW; ++i) {
        pa[i] = x[i];
        pb[i] = y[i];
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
      }
      const auto mu_a = detail::filter_valid(pa, H, W, g);
      const auto mu_b = detail::filter_valid(pb, H, W, g);
      const auto e_aa = detail::filter_valid(aa, H, W, g);
      const auto e_bb = detail::filter_valid(bb, H, W, g);
      const auto e_ab = detail::filter_valid(ab, H, W, g);
      double acc = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double maa = mu_a[i] * mu_a[i], mbb = mu_b[i] * mu_b[i], mab = mu_a[i] * mu_b[i];
        const double va = e_aa[i] - maa, vb = e_bb[i] - mbb, cov = e_ab[i] - mab;
        acc += ((mab + mab + c1) * (cov + cov + c2)) / ((maa + mbb + c1) * (va + vb + c2));
      }
      total += acc / static_cast<double>(mu_a.size());
      ++planes;
    }
  return total / static_cast<double>(planes);
}

}  // namespace ccnet
