#pragma once

// Differentiable primitives over NCHW tensors. Each op computes its forward
// value eagerly and registers a closure that maps the output gradient back to
// its inputs.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "ccnet/autograd.hpp"
#include "ccnet/tensor.hpp"

namespace ccnet {

enum class Axis { horizontal, vertical };

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t channels, in_h, in_w, kernel, stride, pad, out_h, out_w;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k) throw DimensionError("convolution kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

// cols[(c*k + kh)*k + kw][oh*Wo + ow] = in[c][oh*s + kh - p][ow*s + kw - p] (zero outside)
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const auto k = static_cast<std::ptrdiff_t>(g.kernel);
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  const auto Ho = static_cast<std::ptrdiff_t>(g.out_h), Wo = static_cast<std::ptrdiff_t>(g.out_w);
  const auto s = static_cast<std::ptrdiff_t>(g.stride), p = static_cast<std::ptrdiff_t>(g.pad);
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.channels); ++c) {
    const T* plane = in + c * H * W;
    for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
      for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
        T* row = cols + ((c * k + kh) * k + kw) * Ho * Wo;
        for (std::ptrdiff_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = oh * s + kh - p;
          T* dst = row + oh * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + Wo, T{0});
            continue;
          }
          const T* src = plane + ih * W;
          if (s == 1) {
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(p - kw, 0, Wo);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W + p - kw, lo, Wo);
            std::fill(dst, dst + lo, T{0});
            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow + kw - p];
            std::fill(dst + hi, dst + Wo, T{0});
          } else {
            for (std::ptrdiff_t ow = 0; ow < Wo; ++ow) {
              const std::ptrdiff_t iw = ow * s + kw - p;
              dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T{0};
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters cols back into the (accumulated) input plane.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* in) {
  const auto k = static_cast<std::ptrdiff_t>(g.kernel);
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  const auto Ho = static_cast<std::ptrdiff_t>(g.out_h), Wo = static_cast<std::ptrdiff_t>(g.out_w);
  const auto s = static_cast<std::ptrdiff_t>(g.stride), p = static_cast<std::ptrdiff_t>(g.pad);
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.channels); ++c) {
    T* plane = in + c * H * W;
    for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
      for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
        const T* row = cols + ((c * k + kh) * k + kw) * Ho * Wo;
        for (std::ptrdiff_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = oh * s + kh - p;
          if (ih < 0 || ih >= H) continue;
          const T* src = row + oh * Wo;
          T* dst = plane + ih * W;
          if (s == 1) {
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(p - kw, 0, Wo);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W + p - kw, lo, Wo);
            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) dst[ow + kw - p] += src[ow];
          } else {
            for (std::ptrdiff_t ow = 0; ow < Wo; ++ow) {
              const std::ptrdiff_t iw = ow * s + kw - p;
              if (iw >= 0 && iw < W) dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const std::size_t hw = out.plane_size();
  for (std::size_t n = 0; n < out.n(); ++n)
    for (std::size_t c = 0; c < out.c(); ++c) {
      T* p = out.plane(n, c);
      const T b = bias[c];
      for (std::size_t i = 0; i < hw; ++i) p[i] += b;
    }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& dout, Tensor<T>& dbias) {
  const std::size_t hw = dout.plane_size();
  for (std::size_t n = 0; n < dout.n(); ++n)
    for (std::size_t c = 0; c < dout.c(); ++c) {
      const T* p = dout.plane(n, c);
      T acc{0};
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      dbias[c] += acc;
    }
}

template <typename T>
void check_bias(const Var<T>& bias, std::size_t channels) {
  if (bias.defined() && bias.size() != channels) {
    throw DimensionError("bias has " + std::to_string(bias.size()) + " entries, expected " +
                         std::to_string(channels));
  }
}

// Copies an h×w plane into the centre of a zeroed (h+2p)×(w+2p) buffer.
template <typename T>
void pad_plane(const T* src, std::size_t h, std::size_t w, std::size_t p, T* dst) {
  const std::size_t wp = w + 2 * p;
  std::fill(dst, dst + (h + 2 * p) * wp, T{0});
  for (std::size_t y = 0; y < h; ++y) std::copy(src + y * w, src + (y + 1) * w, dst + (y + p) * wp + p);
}

// Stride-1 depth-wise kernels on padded planes; every inner loop is a
// contiguous axpy so it vectorizes.
template <typename T>
void depthwise_plane_forward(const T* padded, std::size_t wp, const T* kern, std::size_t k, std::size_t ho,
                             std::size_t wo, T* out) {
  for (std::size_t oh = 0; oh < ho; ++oh) {
    T* o = out + oh * wo;
    for (std::size_t kh = 0; kh < k; ++kh) {
      const T* r = padded + (oh + kh) * wp;
      for (std::size_t kw = 0; kw < k; ++kw) {
        const T wv = kern[kh * k + kw];
        const T* rr = r + kw;
        for (std::size_t ow = 0; ow < wo; ++ow) o[ow] += wv * rr[ow];
      }
    }
  }
}

template <typename T>
void depthwise_plane_backward(const T* padded, std::size_t wp, const T* kern, std::size_t k, std::size_t ho,
                              std::size_t wo, const T* g, T* gpad, T* gk, T* lanes) {
  if (gk) std::fill(lanes, lanes + k * k * wo, T{0});
  for (std::size_t oh = 0; oh < ho; ++oh) {
    const T* go = g + oh * wo;
    for (std::size_t kh = 0; kh < k; ++kh) {
      const std::size_t row = (oh + kh) * wp;
      for (std::size_t kw = 0; kw < k; ++kw) {
        if (gpad) {
          const T wv = kern[kh * k + kw];
          T* r = gpad + row + kw;
          for (std::size_t ow = 0; ow < wo; ++ow) r[ow] += wv * go[ow];
        }
        if (gk) {
          const T* r = padded + row + kw;
          T* lane = lanes + (kh * k + kw) * wo;
          for (std::size_t ow = 0; ow < wo; ++ow) lane[ow] += go[ow] * r[ow];
        }
      }
    }
  }
  if (gk)
    for (std::size_t t = 0; t < k * k; ++t) {
      T acc{0};
      for (std::size_t ow = 0; ow < wo; ++ow) acc += lanes[t * wo + ow];
      gk[t] += acc;
    }
}

// Depth-wise convolution, one k×k filter per channel, weight (C, 1, k, k).
template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                        const ConvOptions& opt) {
  const Tensor<T>& in = x.value();
  const Tensor<T>& wt = weight.value();
  const std::size_t C = in.c(), k = wt.h();
  if (wt.n() != C || wt.c() != 1 || wt.w() != k) {
    throw DimensionError("depth-wise kernel " + shape_str(wt.shape()) + " incompatible with input " +
                         shape_str(in.shape()));
  }
  check_bias(bias, C);
  const std::size_t s = opt.stride, p = opt.padding;
  const std::size_t Ho = conv_out_size(in.h(), k, s, p), Wo = conv_out_size(in.w(), k, s, p);
  Tensor<T> out({in.n(), C, Ho, Wo});
  const std::size_t in_h = in.h(), in_w = in.w();
  const std::size_t hp = in_h + 2 * p, wp = in_w + 2 * p;

  if (s == 1) {
    std::vector<T> padded(hp * wp);
    for (std::size_t n = 0; n < in.n(); ++n)
      for (std::size_t c = 0; c < C; ++c) {
        pad_plane(in.plane(n, c), in_h, in_w, p, padded.data());
        depthwise_plane_forward(padded.data(), wp, wt.plane(c, 0), k, Ho, Wo, out.plane(n, c));
      }
    if (bias.defined()) add_channel_bias(out, bias.value());
    return record<T>(std::move(out), {x, weight, bias}, [C, k, p, Ho, Wo, hp, wp](Node<T>& self) {
      const Tensor<T>& dout = self.grad;
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      const Tensor<T>& in = px->value;
      const Tensor<T>& wt = pw->value;
      Tensor<T>* dx = needs_grad(px) ? &px->grad_buffer() : nullptr;
      Tensor<T>* dw = needs_grad(pw) ? &pw->grad_buffer() : nullptr;
      const std::size_t H = in.h(), W = in.w();
      std::vector<T> padded(hp * wp), gpad(dx ? hp * wp : 0), lanes(dw ? k * k * Wo : 0);
      for (std::size_t n = 0; n < in.n(); ++n)
        for (std::size_t c = 0; c < C; ++c) {
          if (dw) pad_plane(in.plane(n, c), H, W, p, padded.data());
          if (dx) std::fill(gpad.begin(), gpad.end(), T{0});
          depthwise_plane_backward(padded.data(), wp, wt.plane(c, 0), k, Ho, Wo, dout.plane(n, c),
                                   dx ? gpad.data() : nullptr, dw ? dw->plane(c, 0) : nullptr, lanes.data());
          if (dx) {
            T* gx = dx->plane(n, c);
            for (std::size_t y = 0; y < H; ++y) {
              const T* r = gpad.data() + (y + p) * wp + p;
              for (std::size_t xx = 0; xx < W; ++xx) gx[y * W + xx] += r[xx];
            }
          }
        }
      if (needs_grad(self.parents[2])) accumulate_bias_grad(dout, self.parents[2]->grad_buffer());
    });
  }

  // Strided fallback: visits every (output row, input row, valid output column range) triple.
  auto for_taps = [=](auto&& body) {
    const auto H = static_cast<std::ptrdiff_t>(in_h), W = static_cast<std::ptrdiff_t>(in_w);
    const auto sp = static_cast<std::ptrdiff_t>(s), pp = static_cast<std::ptrdiff_t>(p);
    for (std::size_t kh = 0; kh < k; ++kh)
      for (std::size_t kw = 0; kw < k; ++kw) {
        const auto kwp = static_cast<std::ptrdiff_t>(kw);
        std::ptrdiff_t lo = 0, hi = static_cast<std::ptrdiff_t>(Wo);
        while (lo < hi && lo * sp + kwp - pp < 0) ++lo;
        while (hi > lo && (hi - 1) * sp + kwp - pp >= W) --hi;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * sp +
                                    static_cast<std::ptrdiff_t>(kh) - pp;
          if (ih < 0 || ih >= H) continue;
          body(kh, kw, oh, static_cast<std::size_t>(ih), lo, hi, kwp - pp);
        }
      }
  };

  const auto st = static_cast<std::ptrdiff_t>(s);
  for (std::size_t n = 0; n < in.n(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* src = in.plane(n, c);
      T* dst = out.plane(n, c);
      const T* kern = wt.plane(c, 0);
      for_taps([&](std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ih, std::ptrdiff_t lo,
                   std::ptrdiff_t hi, std::ptrdiff_t shift) {
        const T wv = kern[kh * k + kw];
        T* o = dst + oh * Wo;
        const T* r = src + ih * in_w;
        for (std::ptrdiff_t ow = lo; ow < hi; ++ow) o[ow] += wv * r[ow * st + shift];
      });
    }
  if (bias.defined()) add_channel_bias(out, bias.value());

  return record<T>(std::move(out), {x, weight, bias}, [for_taps, C, k, st, Wo](Node<T>& self) {
    const Tensor<T>& dout = self.grad;
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const Tensor<T>& in = px->value;
    const Tensor<T>& wt = pw->value;
    Tensor<T>* dx = needs_grad(px) ? &px->grad_buffer() : nullptr;
    Tensor<T>* dw = needs_grad(pw) ? &pw->grad_buffer() : nullptr;
    const std::size_t W = in.w();
    for (std::size_t n = 0; n < in.n(); ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* g = dout.plane(n, c);
        const T* src = in.plane(n, c);
        const T* kern = wt.plane(c, 0);
        T* gx = dx ? dx->plane(n, c) : nullptr;
        T* gk = dw ? dw->plane(c, 0) : nullptr;
        for_taps([&](std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ih,
                     std::ptrdiff_t lo, std::ptrdiff_t hi, std::ptrdiff_t shift) {
          const T* go = g + oh * Wo;
          if (gx) {
            const T wv = kern[kh * k + kw];
            T* r = gx + ih * W;
            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) r[ow * st + shift] += wv * go[ow];
          }
          if (gk) {
            const T* r = src + ih * W;
            T acc{0};
            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) acc += go[ow] * r[ow * st + shift];
            gk[kh * k + kw] += acc;
          }
        });
      }
    if (needs_grad(self.parents[2])) accumulate_bias_grad(dout, self.parents[2]->grad_buffer());
  });
}

}  // namespace detail

/// 2-D convolution with zero padding. weight is (Cout, Cin/groups, k, k);
/// groups must be 1 or equal to Cin (depth-wise). bias may be undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvOptions& opt = {}) {
  using namespace detail;
  const Tensor<T>& in = x.value();
  const Tensor<T>& wt = weight.value();
  if (opt.stride == 0) throw ConfigError("convolution stride must be positive");
  if (opt.groups != 1) {
    if (opt.groups != in.c() || wt.n() != in.c()) {
      throw ConfigError("only groups == 1 or depth-wise (groups == channels) convolutions are supported");
    }
    return depthwise_conv2d(x, weight, bias, opt);
  }
  if (wt.c() != in.c() || wt.h() != wt.w()) {
    throw DimensionError("conv kernel " + shape_str(wt.shape()) + " incompatible with input " +
                         shape_str(in.shape()));
  }
  const std::size_t Cout = wt.n(), k = wt.h();
  check_bias(bias, Cout);
  ConvGeometry g{in.c(), in.h(), in.w(), k, opt.stride, opt.padding,
                 conv_out_size(in.h(), k, opt.stride, opt.padding),
                 conv_out_size(in.w(), k, opt.stride, opt.padding)};
  const bool pointwise = (k == 1 && opt.stride == 1 && opt.padding == 0);
  Tensor<T> out({in.n(), Cout, g.out_h, g.out_w});
  AlignedVector<T> cols(pointwise ? 0 : g.rows() * g.cols());
  ConstMatMap<T> wm(wt.data(), Cout, g.rows());
  for (std::size_t n = 0; n < in.n(); ++n) {
    const T* colp = in.plane(n, 0);
    if (!pointwise) {
      im2col(in.plane(n, 0), g, cols.data());
      colp = cols.data();
    }
    MatMap<T> om(out.plane(n, 0), Cout, g.cols());
    om.noalias() = wm * ConstMatMap<T>(colp, g.rows(), g.cols());
  }
  if (bias.defined()) add_channel_bias(out, bias.value());

  return record<T>(std::move(out), {x, weight, bias}, [g, pointwise, Cout](Node<T>& self) {
    const Tensor<T>& dout = self.grad;
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const Tensor<T>& in = px->value;
    ConstMatMap<T> wm(pw->value.data(), Cout, g.rows());
    AlignedVector<T> cols(pointwise ? 0 : g.rows() * g.cols());
    for (std::size_t n = 0; n < in.n(); ++n) {
      ConstMatMap<T> gm(dout.plane(n, 0), Cout, g.cols());
      if (needs_grad(pw)) {
        const T* colp = in.plane(n, 0);
        if (!pointwise) {
          im2col(in.plane(n, 0), g, cols.data());
          colp = cols.data();
        }
        MatMap<T> dwm(pw->grad_buffer().data(), Cout, g.rows());
        dwm.noalias() += gm * ConstMatMap<T>(colp, g.rows(), g.cols()).transpose();
      }
      if (needs_grad(px)) {
        if (pointwise) {
          MatMap<T> dxm(px->grad_buffer().plane(n, 0), g.rows(), g.cols());
          dxm.noalias() += wm.transpose() * gm;
        } else {
          MatMap<T> dcols(cols.data(), g.rows(), g.cols());
          dcols.noalias() = wm.transpose() * gm;
          col2im(cols.data(), g, px->grad_buffer().plane(n, 0));
        }
      }
    }
    if (needs_grad(self.parents[2])) accumulate_bias_grad(dout, self.parents[2]->grad_buffer());
  });
}

/// Transposed convolution (adjoint of a strided conv). weight is (Cin, Cout, k, k);
/// output size is (in - 1) * stride - 2 * padding + k.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                        const ConvOptions& opt) {
  using namespace detail;
  const Tensor<T>& in = x.value();
  const Tensor<T>& wt = weight.value();
  if (wt.n() != in.c() || wt.h() != wt.w()) {
    throw DimensionError("transposed-conv kernel " + shape_str(wt.shape()) +
                         " incompatible with input " + shape_str(in.shape()));
  }
  const std::size_t Cin = in.c(), Cout = wt.c(), k = wt.h(), s = opt.stride, p = opt.padding;
  if ((in.h() - 1) * s + k < 2 * p + 1) throw DimensionError("transposed-conv output would be empty");
  check_bias(bias, Cout);
  const std::size_t Ho = (in.h() - 1) * s + k - 2 * p, Wo = (in.w() - 1) * s + k - 2 * p;
  // Geometry of the forward conv that maps the output back onto the input grid.
  ConvGeometry g{Cout, Ho, Wo, k, s, p, in.h(), in.w()};
  if (conv_out_size(Ho, k, s, p) != in.h() || conv_out_size(Wo, k, s, p) != in.w()) {
    throw DimensionError("transposed-conv geometry is not invertible for this input size");
  }
  Tensor<T> out({in.n(), Cout, Ho, Wo});
  AlignedVector<T> cols(g.rows() * g.cols());
  ConstMatMap<T> wm(wt.data(), Cin, g.rows());
  for (std::size_t n = 0; n < in.n(); ++n) {
    MatMap<T> cm(cols.data(), g.rows(), g.cols());
    cm.noalias() = wm.transpose() * ConstMatMap<T>(in.plane(n, 0), Cin, g.cols());
    col2im(cols.data(), g, out.plane(n, 0));
  }
  if (bias.defined()) add_channel_bias(out, bias.value());

  return record<T>(std::move(out), {x, weight, bias}, [g, Cin](Node<T>& self) {
    const Tensor<T>& dout = self.grad;
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const Tensor<T>& in = px->value;
    ConstMatMap<T> wm(pw->value.data(), Cin, g.rows());
    AlignedVector<T> cols(g.rows() * g.cols());
    for (std::size_t n = 0; n < in.n(); ++n) {
      im2col(dout.plane(n, 0), g, cols.data());
      ConstMatMap<T> cm(cols.data(), g.rows(), g.cols());
      if (needs_grad(px)) {
        MatMap<T> dxm(px->grad_buffer().plane(n, 0), Cin, g.cols());
        dxm.noalias() += wm * cm;
      }
      if (needs_grad(pw)) {
        MatMap<T> dwm(pw->grad_buffer().data(), Cin, g.rows());
        dwm.noalias() += ConstMatMap<T>(in.plane(n, 0), Cin, g.cols()) * cm.transpose();
      }
    }
    if (needs_grad(self.parents[2])) accumulate_bias_grad(dout, self.parents[2]->grad_buffer());
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return record<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int i = 0; i < 2; ++i)
      if (needs_grad(self.parents[i])) self.parents[i]->grad_buffer() += self.grad;
  });
}

/// Element-wise (Hadamard) product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  return record<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const T* g = self.grad.data();
    for (int i = 0; i < 2; ++i) {
      if (!needs_grad(self.parents[i])) continue;
      const T* other = self.parents[1 - i]->value.data();
      T* d = self.parents[i]->grad_buffer().data();
      for (std::size_t j = 0; j < self.grad.size(); ++j) d[j] += g[j] * other[j];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.values()) v *= factor;
  return record<T>(std::move(out), {a}, [factor](Node<T>& self) {
    T* d = self.parents[0]->grad_buffer().data();
    for (std::size_t j = 0; j < self.grad.size(); ++j) d[j] += factor * self.grad[j];
  });
}

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(px[i]);
  return record<T>(std::move(out), {x}, [](Node<T>& self) {
    const T* px = self.parents[0]->value.data();
    T* d = self.parents[0]->grad_buffer().data();
    for (std::size_t j = 0; j < self.grad.size(); ++j) d[j] += self.grad[j] * gelu_derivative(px[j]);
  });
}

/// Normalizes the channel vector at every spatial location, then applies a
/// per-channel affine. gain/bias hold C entries each.
template <typename T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-6)) {
  const Tensor<T>& in = x.value();
  const std::size_t N = in.n(), C = in.c(), HW = in.plane_size();
  if (C == 0) throw DimensionError("layer_norm_channels: input has no channels");
  if (gain.size() != C || bias.size() != C) {
    throw DimensionError("layer_norm_channels: gain/bias length must equal channel count " +
                         std::to_string(C));
  }
  Tensor<T> xhat(in.shape());
  Tensor<T> rstd({N, 1, in.h(), in.w()});
  Tensor<T> out(in.shape());
  std::vector<T> mean(HW), var(HW);
  const T inv_c = T(1) / static_cast<T>(C);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(mean.begin(), mean.end(), T{0});
    std::fill(var.begin(), var.end(), T{0});
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = in.plane(n, c);
      for (std::size_t i = 0; i < HW; ++i) mean[i] += p[i];
    }
    for (T& m : mean) m *= inv_c;
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = in.plane(n, c);
      for (std::size_t i = 0; i < HW; ++i) {
        const T d = p[i] - mean[i];
        var[i] += d * d;
      }
    }
    T* r = rstd.plane(n, 0);
    for (std::size_t i = 0; i < HW; ++i) r[i] = T(1) / std::sqrt(var[i] * inv_c + eps);
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = in.plane(n, c);
      T* xh = xhat.plane(n, c);
      T* o = out.plane(n, c);
      const T g = gain.value()[c], b = bias.value()[c];
      for (std::size_t i = 0; i < HW; ++i) {
        xh[i] = (p[i] - mean[i]) * r[i];
        o[i] = xh[i] * g + b;
      }
    }
  }
  return record<T>(std::move(out), {x, gain, bias},
                   [xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
    const Tensor<T>& dy = self.grad;
    const std::size_t N = dy.n(), C = dy.c(), HW = dy.plane_size();
    auto& px = self.parents[0];
    const Tensor<T>& g = self.parents[1]->value;
    Tensor<T>* dg = needs_grad(self.parents[1]) ? &self.parents[1]->grad_buffer() : nullptr;
    Tensor<T>* db = needs_grad(self.parents[2]) ? &self.parents[2]->grad_buffer() : nullptr;
    std::vector<T> m1(HW), m2(HW);
    const T inv_c = T(1) / static_cast<T>(C);
    for (std::size_t n = 0; n < N; ++n) {
      std::fill(m1.begin(), m1.end(), T{0});
      std::fill(m2.begin(), m2.end(), T{0});
      for (std::size_t c = 0; c < C; ++c) {
        const T* gy = dy.plane(n, c);
        const T* xh = xhat.plane(n, c);
        T sg{0}, sb{0};
        for (std::size_t i = 0; i < HW; ++i) {
          const T dxh = gy[i] * g[c];
          m1[i] += dxh;
          m2[i] += dxh * xh[i];
          sg += gy[i] * xh[i];
          sb += gy[i];
        }
        if (dg) (*dg)[c] += sg;
        if (db) (*db)[c] += sb;
      }
      if (!needs_grad(px)) continue;
      const T* r = rstd.plane(n, 0);
      for (std::size_t c = 0; c < C; ++c) {
        const T* gy = dy.plane(n, c);
        const T* xh = xhat.plane(n, c);
        T* dx = px->grad_buffer().plane(n, c);
        for (std::size_t i = 0; i < HW; ++i) {
          dx[i] += r[i] * (gy[i] * g[c] - m1[i] * inv_c - xh[i] * m2[i] * inv_c);
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw DimensionError("concat_channels: " + shape_str(s) + " vs " + shape_str(s0));
    }
    total += s[1];
  }
  Tensor<T> out({s0[0], total, s0[2], s0[3]});
  const std::size_t HW = s0[2] * s0[3];
  for (std::size_t n = 0; n < s0[0]; ++n) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.shape()[1] * HW;
      std::copy_n(p.value().plane(n, 0), len, out.plane(n, c0));
      c0 += p.shape()[1];
    }
  }
  return record<T>(std::move(out), parts, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const std::size_t HW = g.plane_size();
    for (std::size_t n = 0; n < g.n(); ++n) {
      std::size_t c0 = 0;
      for (auto& p : self.parents) {
        const std::size_t C = p->value.c();
        if (needs_grad(p)) {
          T* d = p->grad_buffer().plane(n, 0);
          const T* src = g.plane(n, c0);
          for (std::size_t i = 0; i < C * HW; ++i) d[i] += src[i];
        }
        c0 += C;
      }
    }
  });
}

/// Channels [start, start + count).
template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t start, std::size_t count) {
  const Tensor<T>& in = x.value();
  if (start + count > in.c()) throw DimensionError("slice_channels: range exceeds channel count");
  if (start == 0 && count == in.c()) return x;
  Tensor<T> out({in.n(), count, in.h(), in.w()});
  const std::size_t len = count * in.plane_size();
  for (std::size_t n = 0; n < in.n(); ++n) std::copy_n(in.plane(n, start), len, out.plane(n, 0));
  return record<T>(std::move(out), {x}, [start, count](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    Tensor<T>& d = self.parents[0]->grad_buffer();
    const std::size_t len = count * g.plane_size();
    for (std::size_t n = 0; n < g.n(); ++n) {
      T* dst = d.plane(n, start);
      const T* src = g.plane(n, 0);
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

/// Softmax across the channel axis at every (n, y, x).
template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  const Tensor<T>& in = x.value();
  const std::size_t N = in.n(), K = in.c(), HW = in.plane_size();
  Tensor<T> out(in.shape());
  std::vector<T> mx(HW), sum(HW);
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(in.plane(n, 0), HW, mx.begin());
    for (std::size_t k = 1; k < K; ++k) {
      const T* p = in.plane(n, k);
      for (std::size_t i = 0; i < HW; ++i) mx[i] = std::max(mx[i], p[i]);
    }
    std::fill(sum.begin(), sum.end(), T{0});
    for (std::size_t k = 0; k < K; ++k) {
      const T* p = in.plane(n, k);
      T* o = out.plane(n, k);
      for (std::size_t i = 0; i < HW; ++i) {
        o[i] = std::exp(p[i] - mx[i]);
        sum[i] += o[i];
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      T* o = out.plane(n, k);
      for (std::size_t i = 0; i < HW; ++i) o[i] /= sum[i];
    }
  }
  return record<T>(out, {x}, [y = out](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    Tensor<T>& d = self.parents[0]->grad_buffer();
    const std::size_t N = g.n(), K = g.c(), HW = g.plane_size();
    std::vector<T> dot(HW);
    for (std::size_t n = 0; n < N; ++n) {
      std::fill(dot.begin(), dot.end(), T{0});
      for (std::size_t k = 0; k < K; ++k) {
        const T* pg = g.plane(n, k);
        const T* py = y.plane(n, k);
        for (std::size_t i = 0; i < HW; ++i) dot[i] += pg[i] * py[i];
      }
      for (std::size_t k = 0; k < K; ++k) {
        const T* pg = g.plane(n, k);
        const T* py = y.plane(n, k);
        T* pd = d.plane(n, k);
        for (std::size_t i = 0; i < HW; ++i) pd[i] += py[i] * (pg[i] - dot[i]);
      }
    }
  });
}

/// 2×2 mean pooling with stride 2; spatial dims must be even.
template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const Tensor<T>& in = x.value();
  if (in.h() % 2 || in.w() % 2) {
    throw InputError("avg_pool2 needs even spatial dims, got " + shape_str(in.shape()));
  }
  const std::size_t Ho = in.h() / 2, Wo = in.w() / 2;
  Tensor<T> out({in.n(), in.c(), Ho, Wo});
  for (std::size_t n = 0; n < in.n(); ++n)
    for (std::size_t c = 0; c < in.c(); ++c) {
      const T* p = in.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xx = 0; xx < Wo; ++xx) {
          const T* r0 = p + 2 * y * in.w() + 2 * xx;
          const T* r1 = r0 + in.w();
          o[y * Wo + xx] = T(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
        }
    }
  return record<T>(std::move(out), {x}, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    Tensor<T>& d = self.parents[0]->grad_buffer();
    const std::size_t Ho = g.h(), Wo = g.w(), W = d.w();
    for (std::size_t n = 0; n < g.n(); ++n)
      for (std::size_t c = 0; c < g.c(); ++c) {
        const T* pg = g.plane(n, c);
        T* pd = d.plane(n, c);
        for (std::size_t y = 0; y < Ho; ++y)
          for (std::size_t xx = 0; xx < Wo; ++xx) {
            const T v = T(0.25) * pg[y * Wo + xx];
            T* r0 = pd + 2 * y * W + 2 * xx;
            r0[0] += v;
            r0[1] += v;
            r0[W] += v;
            r0[W + 1] += v;
          }
      }
  });
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  NoGradGuard guard;
  return avg_pool2(Var<T>(x)).value();
}

/// Scalar Σ x.
template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  return record<T>(Tensor<T>({1, 1, 1, 1}, acc), {x}, [](Node<T>& self) {
    const T g = self.grad[0];
    for (T& d : self.parents[0]->grad_buffer().values()) d += g;
  });
}

/// Scalar Σ x ⊙ w for a constant weight tensor w.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  x.value().require_same_shape(w, "weighted_sum");
  T acc{0};
  for (std::size_t i = 0; i < w.size(); ++i) acc += x.value()[i] * w[i];
  return record<T>(Tensor<T>({1, 1, 1, 1}, acc), {x}, [w](Node<T>& self) {
    const T g = self.grad[0];
    T* d = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < w.size(); ++i) d[i] += g * w[i];
  });
}

}  // namespace ccnet
