#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccnet/layers.hpp"

namespace ccnet {

struct TrainConfig {
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 4;
  std::size_t iterations = 2000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  std::size_t patch = 64;
  double hflip_prob = 0.5;
  double lambda = 0.1;

  void validate() const {
    if (!(lr_min < lr_max)) throw ConfigError("lr_min must be below lr_max");
    if (lr_min < 0) throw ConfigError("lr_min must be non-negative");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("Adam eps must be positive");
    if (patch < 4 || patch % 4 != 0) throw ConfigError("patch size must be a positive multiple of 4");
    if (hflip_prob < 0 || hflip_prob > 1) throw ConfigError("hflip_prob must lie in [0, 1]");
    if (lambda < 0) throw ConfigError("lambda must be non-negative");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr_max", c.lr_max},         {"lr_min", c.lr_min}, {"beta1", c.beta1},
       {"beta2", c.beta2},           {"eps", c.eps},       {"batch", c.batch},
       {"iterations", c.iterations}, {"seed", c.seed},     {"eval_every", c.eval_every},
       {"patch", c.patch},           {"hflip_prob", c.hflip_prob}, {"lambda", c.lambda}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr_max = j.value("lr_max", d.lr_max);
  c.lr_min = j.value("lr_min", d.lr_min);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.batch = j.value("batch", d.batch);
  c.iterations = j.value("iterations", d.iterations);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.patch = j.value("patch", d.patch);
  c.hflip_prob = j.value("hflip_prob", d.hflip_prob);
  c.lambda = j.value("lambda", d.lambda);
}

/// Cosine annealing from lr_max at t = 0 to lr_min at t = T.
inline double cosine_lr(std::size_t t, const TrainConfig& cfg) {
  const double frac = static_cast<double>(std::min(t, cfg.iterations)) / static_cast<double>(cfg.iterations);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamList<T>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.var.shape());
      s.v.emplace_back(p.var.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update over every parameter. Parameters that
/// received no gradient are treated as having a zero gradient.
template <typename T>
void adam_step(ParamList<T>& params, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("Adam state does not match the parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = params[i].var.mutable_value();
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    w.require_same_shape(m, "adam_step");
    const Tensor<T>* g = params[i].var.grad_ptr();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = g ? (*g)[j] : T{0};
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace ccnet
