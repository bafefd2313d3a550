#pragma once

// Central finite-difference checks of the reverse-mode gradients, run in
// double precision. Each registered op is reduced to a scalar through a fixed
// random projection so that every output element carries a distinct weight.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ccnet/backbone.hpp"
#include "ccnet/losses_metrics.hpp"

namespace ccnet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the per-tensor relative error, so tensors whose
  // true gradient is zero are judged by absolute error.
  double floor = 1e-6;
  Shape shape{1, 4, 8, 8};
};

struct TensorError {
  std::string name;
  double max_abs_error = 0;
  double scale = 0;
  double relative_error = 0;
};

struct GradCheckReport {
  std::string op;
  double max_relative_error = 0;
  std::size_t checked = 0;
  std::vector<TensorError> tensors;
  bool passed = false;
};

/// A scalar function of named leaf tensors.
struct GradProblem {
  std::vector<NamedParam<double>> leaves;
  std::function<Var<double>()> eval;
};

namespace detail {

inline Var<double> random_leaf(Shape shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<double> t(shape);
  for (double& v : t.values()) v = dist(rng);
  return Var<double>(std::move(t), true);
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng) { return random_leaf(shape, rng).value(); }

// Replaces every parameter with O(1) random values so no term is degenerate
// (zero-initialized heads, tiny refinement weights, unit norm gains).
inline void randomize(ParamList<double>& params, Rng& rng, double stddev = 0.5) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& p : params)
    for (double& v : p.var.mutable_value().values()) v = dist(rng);
}

template <typename Fn>
GradProblem projected(std::vector<NamedParam<double>> leaves, Shape out_shape, Rng& rng, Fn fn) {
  auto weights = std::make_shared<Tensor<double>>(random_tensor(out_shape, rng));
  return {std::move(leaves), [weights, fn] { return weighted_sum(fn(), *weights); }};
}

inline std::vector<NamedParam<double>> with_input(const Var<double>& x, ParamList<double> params) {
  params.insert(params.begin(), {"x", x});
  return params;
}

inline GradProblem strip_apply_problem(const GradCheckOptions& o, Rng& rng, Axis axis, std::size_t dilation) {
  constexpr std::size_t K = 3;
  Var<double> x = random_leaf(o.shape, rng);
  Var<double> a = random_leaf({o.shape[0], K, o.shape[2], o.shape[3]}, rng);
  return projected({{"x", x}, {"a", a}}, o.shape, rng, [=] {
    return strip_apply(x, StripWeights<double>{a, K, 0}, axis, dilation);
  });
}

template <typename P>
auto shared_params(P p) {
  return std::make_shared<P>(std::move(p));
}

}  // namespace detail

struct GradCheckEntry {
  std::string id;
  std::function<GradProblem(const GradCheckOptions&, Rng&)> build;
};

inline const std::vector<GradCheckEntry>& gradcheck_registry() {
  using namespace detail;
  static const std::vector<GradCheckEntry> registry = {
      {"conv1x1",
       [](const GradCheckOptions& o, Rng& rng) {
         auto conv = shared_params(Conv2d<double>::same(o.shape[1], o.shape[1], 1, Init::fan_in_uniform, rng));
         ParamList<double> ps;
         conv->collect("conv", ps);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return (*conv)(x); });
       }},
      {"layer_norm_channels",
       [](const GradCheckOptions& o, Rng& rng) {
         Var<double> x = random_leaf(o.shape, rng);
         Var<double> g = random_leaf({1, o.shape[1], 1, 1}, rng);
         Var<double> b = random_leaf({1, o.shape[1], 1, 1}, rng);
         return projected({{"x", x}, {"gain", g}, {"bias", b}}, o.shape, rng,
                          [=] { return layer_norm_channels(x, g, b); });
       }},
      {"csu_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(BlockParams<double>::make(o.shape[1], 2, 7, rng));
         ParamList<double> ps;
         p->collect("csu", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         Shape out = o.shape;
         out[1] *= 2;
         return projected(with_input(x, ps), out, rng, [=] { return csu_forward(x, *p); });
       }},
      {"ersm_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(BlockParams<double>::make(o.shape[1], 2, 7, rng));
         ParamList<double> ps;
         p->collect("ersm", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return ersm_forward(x, *p); });
       }},
      {"drsm_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(BlockParams<double>::make(o.shape[1], 2, 7, rng));
         ParamList<double> ps;
         p->collect("drsm", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return drsm_forward(x, *p); });
       }},
      {"plain_residual_block_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(PlainBlockParams<double>::make(o.shape[1], rng));
         ParamList<double> ps;
         p->collect("plain", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return plain_residual_block_forward(x, *p); });
       }},
      {"generate_strip_weights",
       [](const GradCheckOptions& o, Rng& rng) {
         constexpr std::size_t K = 5;
         auto gen = shared_params(Conv2d<double>::same(o.shape[1], K, 1, Init::fan_in_uniform, rng));
         ParamList<double> ps;
         gen->collect("gen", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), {o.shape[0], K, o.shape[2], o.shape[3]}, rng,
                          [=] { return generate_strip_weights(x, *gen, K).values; });
       }},
      {"strip_apply_h_d1", [](const GradCheckOptions& o, Rng& rng) { return strip_apply_problem(o, rng, Axis::horizontal, 1); }},
      {"strip_apply_h_d4", [](const GradCheckOptions& o, Rng& rng) { return strip_apply_problem(o, rng, Axis::horizontal, 4); }},
      {"strip_apply_v_d1", [](const GradCheckOptions& o, Rng& rng) { return strip_apply_problem(o, rng, Axis::vertical, 1); }},
      {"strip_apply_v_d4", [](const GradCheckOptions& o, Rng& rng) { return strip_apply_problem(o, rng, Axis::vertical, 4); }},
      {"ldsi_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         constexpr std::size_t K = 5;
         auto p = shared_params(LdsiParams<double>::make(o.shape[1], K, rng));
         ParamList<double> ps;
         p->collect("ldsi", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng,
                          [=] { return ldsi_forward(x, *p, Axis::horizontal, K); });
       }},
      {"ldim_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(LdimParams<double>::make(LdimConfig::split(o.shape[1], {3, 5}), rng));
         ParamList<double> ps;
         p->collect("ldim", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return ldim_forward(x, *p); });
       }},
      {"rsam_forward",
       [](const GradCheckOptions& o, Rng& rng) {
         auto p = shared_params(RsamParams<double>::make(o.shape[1], 2, 7, {3, 5}, rng));
         ParamList<double> ps;
         p->collect("rsam", ps);
         randomize(ps, rng);
         Var<double> x = random_leaf(o.shape, rng);
         return projected(with_input(x, ps), o.shape, rng, [=] { return rsam_forward(x, *p); });
       }},
      {"dual_domain_loss",
       [](const GradCheckOptions& o, Rng& rng) {
         std::vector<NamedParam<double>> leaves;
         auto targets = std::make_shared<std::vector<Tensor<double>>>();
         std::vector<Var<double>> preds;
         Shape s = o.shape;
         for (int i = 0; i < 3; ++i) {
           preds.push_back(random_leaf(s, rng));
           targets->push_back(random_tensor(s, rng));
           leaves.push_back({"pred" + std::to_string(i), preds.back()});
           s[2] = std::max<std::size_t>(1, s[2] / 2);
           s[3] = std::max<std::size_t>(1, s[3] / 2);
         }
         return GradProblem{leaves, [preds, targets] {
                              return dual_domain_loss<double>(std::span<const Var<double>>(preds),
                                                              std::span<const Tensor<double>>(*targets), 0.1)
                                  .total;
                            }};
       }},
  };
  return registry;
}

inline std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> ids;
  for (const auto& e : gradcheck_registry()) ids.push_back(e.id);
  return ids;
}

/// Compares the backward pass of `problem` against central differences on
/// every element of every leaf.
inline GradCheckReport check_gradients(const std::string& op, GradProblem problem, const GradCheckOptions& opt) {
  for (auto& l : problem.leaves) l.var.zero_grad();
  backward(problem.eval());
  GradCheckReport report;
  report.op = op;
  NoGradGuard no_grad;
  for (auto& leaf : problem.leaves) {
    const Tensor<double> analytic = leaf.var.grad();
    Tensor<double>& value = leaf.var.mutable_value();
    Tensor<double> numeric(value.shape());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + opt.step;
      const double fp = problem.eval().value()[0];
      value[i] = saved - opt.step;
      const double fm = problem.eval().value()[0];
      value[i] = saved;
      numeric[i] = (fp - fm) / (2.0 * opt.step);
    }
    TensorError e;
    e.name = leaf.name;
    e.max_abs_error = max_abs_diff(analytic, numeric);
    e.scale = std::max({max_abs(analytic), max_abs(numeric), opt.floor});
    e.relative_error = e.max_abs_error / e.scale;
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    report.checked += value.size();
    report.tensors.push_back(std::move(e));
  }
  report.passed = std::isfinite(report.max_relative_error) && report.max_relative_error < opt.tolerance;
  return report;
}

inline GradCheckReport grad_check(const std::string& op, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  for (const auto& e : gradcheck_registry()) {
    if (e.id != op) continue;
    Rng rng(seed);
    return check_gradients(op, e.build(opt, rng), opt);
  }
  std::string known;
  for (const auto& id : gradcheck_ops()) known += (known.empty() ? "" : ", ") + id;
  throw ConfigError("unknown gradcheck op '" + op + "' (known: " + known + ")");
}

/// Ids matched by a user selector: an exact id, or a prefix such as
/// "strip_apply" that selects every axis/dilation variant.
inline std::vector<std::string> select_gradcheck_ops(const std::string& selector) {
  std::vector<std::string> out;
  for (const auto& id : gradcheck_ops())
    if (selector == "all" || id == selector || id.rfind(selector + "_", 0) == 0) out.push_back(id);
  if (out.empty()) grad_check(selector, 0);  // throws the diagnostic listing known ids
  return out;
}

}  // namespace ccnet
