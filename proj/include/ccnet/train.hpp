#pragma once

// Training loop, evaluation and the ablation runner.
//
// Batch composition is a pure function of (seed, iteration): sample k of the
// run is drawn from a per-epoch shuffled order, and its crop/flip come from a
// generator seeded with k. Resuming therefore needs only the iteration count.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccnet/checkpoint.hpp"
#include "ccnet/data_synth.hpp"
#include "ccnet/losses_metrics.hpp"

namespace ccnet {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::size_t iteration = 0;  // 1-based count of completed updates
  double lr = 0;
  double spatial = 0;
  double frequency = 0;
  double total = 0;
  double psnr = 0;  // full-resolution head on the training batch, clamped
};

inline void to_json(nlohmann::json& j, const StepRecord& r) {
  j = {{"iteration", r.iteration}, {"lr", r.lr},   {"L_s", r.spatial},
       {"L_f", r.frequency},       {"L", r.total}, {"psnr", r.psnr}};
}

struct EvalReport {
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::vector<double> psnr;
  std::vector<double> ssim;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  // JSON has no infinity; identical images report psnr as null.
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < r.psnr.size(); ++i) per.push_back({{"psnr", finite_or_null(r.psnr[i])}, {"ssim", r.ssim[i]}});
  j = {{"mean_psnr", finite_or_null(r.mean_psnr)}, {"mean_ssim", r.mean_ssim}, {"images", per}};
}

template <typename T>
Tensor<T> clamp_unit(const Tensor<T>& t) {
  Tensor<T> out = t;
  for (T& v : out.values()) v = std::clamp(v, T(0), T(1));
  return out;
}

/// Mean PSNR/SSIM of the full-resolution head (clamped to [0, 1]) over all pairs.
template <typename T>
EvalReport evaluate(const Model<T>& model, const std::vector<ImagePair>& data) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  NoGradGuard guard;
  EvalReport r;
  for (const auto& pair : data) {
    const auto out = forward_multiscale(model, pair.degraded.cast<T>());
    const Tensor<float> restored = clamp_unit(out.restored[0].value()).template cast<float>();
    r.psnr.push_back(psnr(restored, pair.clean));
    r.ssim.push_back(ssim(restored, pair.clean));
  }
  r.mean_psnr = std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / static_cast<double>(r.psnr.size());
  r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / static_cast<double>(r.ssim.size());
  return r;
}

namespace detail {

inline std::size_t epoch_slot(std::uint64_t seed, std::size_t sample, std::size_t n) {
  const std::size_t epoch = sample / n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed ^ 0x5eedda7aULL, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order[sample % n];
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Image>& images) {
  const Shape s = images.front().shape();
  Tensor<T> out({images.size(), s[1], s[2], s[3]});
  const std::size_t per = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].require_same_shape(images.front(), "stack_batch");
    std::transform(images[i].data(), images[i].data() + per, out.data() + i * per,
                   [](float v) { return static_cast<T>(v); });
  }
  return out;
}

}  // namespace detail

template <typename T>
class Trainer {
 public:
  Trainer(Model<T> model, TrainConfig cfg, std::vector<ImagePair> data)
      : model_(std::move(model)), cfg_(cfg), data_(std::move(data)) {
    cfg_.validate();
    if (data_.empty()) throw InputError("training dataset is empty");
    params_ = model_.parameters();
    adam_ = AdamState<T>::zeros_like(params_);
  }

  /// The training pair indices and patches used by update number `iteration` (0-based).
  std::pair<Tensor<T>, Tensor<T>> batch(std::size_t iteration) const {
    std::vector<Image> degraded, clean;
    for (std::size_t b = 0; b < cfg_.batch; ++b) {
      const std::size_t k = iteration * cfg_.batch + b;
      const std::size_t idx = detail::epoch_slot(cfg_.seed, k, data_.size());
      Rng rng(mix_seed(cfg_.seed ^ 0xa06e0b1dULL, k));
      const ImagePair p = extract_patches(data_[idx], cfg_.patch, cfg_.hflip_prob, rng);
      degraded.push_back(p.degraded);
      clean.push_back(p.clean);
    }
    return {detail::stack_batch<T>(degraded), detail::stack_batch<T>(clean)};
  }

  StepRecord step() {
    const double lr = cosine_lr(iteration_, cfg_);
    auto [input, target] = batch(iteration_);
    const auto out = forward_multiscale(model_, input);
    const auto loss = dual_domain_loss(out, make_scale_targets(target), static_cast<T>(cfg_.lambda));
    StepRecord r;
    r.iteration = iteration_ + 1;
    r.lr = lr;
    r.spatial = static_cast<double>(loss.spatial_value());
    r.frequency = static_cast<double>(loss.frequency_value());
    r.total = static_cast<double>(loss.total_value());
    if (!std::isfinite(r.total)) {
      std::ostringstream os;
      os << "non-finite loss at iteration " << r.iteration << " (lr=" << lr << ", L_s=" << r.spatial
         << ", L_f=" << r.frequency << ", L=" << r.total << ")";
      throw NonFiniteLossError(os.str());
    }
    r.psnr = psnr(clamp_unit(out.restored[0].value()), target);
    backward(loss.total);
    adam_step(params_, adam_, lr, cfg_);
    zero_grads(params_);
    ++iteration_;
    return r;
  }

  /// Runs until `cfg.iterations` updates have been made. Each record is
  /// appended to the trace and, when given, written to `log` as one JSON line.
  void run(std::ostream* log = nullptr, const std::function<void(const StepRecord&)>& on_step = {}) {
    while (iteration_ < cfg_.iterations) {
      StepRecord r = step();
      trace_.push_back(r);
      if (log) *log << nlohmann::json(r).dump() << '\n';
      if (on_step) on_step(r);
    }
    if (log) log->flush();
  }

  Checkpoint<T> checkpoint() const { return capture_checkpoint(model_, adam_, cfg_, iteration_); }

  void restore(const Checkpoint<T>& ck) {
    if (config_digest(ck.train_cfg) != config_digest(cfg_)) {
      throw ConfigError("checkpoint training config digest does not match this trainer");
    }
    adam_ = restore_checkpoint(ck, model_);
    iteration_ = ck.iteration;
  }

  void save(const std::filesystem::path& dir) const { save_checkpoint(dir, checkpoint()); }
  void load(const std::filesystem::path& dir) { restore(load_checkpoint<T>(dir, &model_.cfg)); }

  const Model<T>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t iteration() const { return iteration_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  const std::vector<ImagePair>& data() const { return data_; }

 private:
  Model<T> model_;
  TrainConfig cfg_;
  std::vector<ImagePair> data_;
  ParamList<T> params_;
  AdamState<T> adam_;
  std::size_t iteration_ = 0;
  std::vector<StepRecord> trace_;
};

/// Model initialization seed derived from the training seed.
inline std::uint64_t model_seed(const TrainConfig& cfg) { return mix_seed(cfg.seed, 0x30de1); }

struct TrainResult {
  std::vector<StepRecord> trace;
  EvalReport final_eval;
};

/// Builds a model from `mcfg`, trains it on `data`, evaluates it on the same
/// pairs, and optionally writes metrics.jsonl + checkpoint/ into `out_dir`.
template <typename T>
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const std::vector<ImagePair>& data,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const std::function<void(const StepRecord&)>& on_step = {}) {
  Trainer<T> trainer(build_model<T>(mcfg, model_seed(tcfg)), tcfg, data);
  std::ofstream log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log.open(*out_dir / "metrics.jsonl", std::ios::app);
    if (!log) throw IoError("cannot open metrics log in " + out_dir->string());
  }
  trainer.run(out_dir ? &log : nullptr, on_step);
  TrainResult result{trainer.trace(), evaluate(trainer.model(), data)};
  if (out_dir) trainer.save(*out_dir / "checkpoint");
  return result;
}

/// Non-overlapping window means of the total loss over records whose
/// iteration is greater than `after`.
inline std::vector<double> smoothed_loss(const std::vector<StepRecord>& trace, std::size_t window,
                                         std::size_t after = 0) {
  std::vector<double> out;
  double acc = 0;
  std::size_t count = 0;
  for (const auto& r : trace) {
    if (r.iteration <= after) continue;
    acc += r.total;
    if (++count == window) {
      out.push_back(acc / static_cast<double>(window));
      acc = 0;
      count = 0;
    }
  }
  return out;
}

struct AblationVariant {
  std::string name;
  BlockType block;
  bool ldim;
};

inline std::vector<AblationVariant> ablation_variants() {
  return {{"baseline", BlockType::plain, false},   {"+D-RSM", BlockType::drsm, false},
          {"+ERSM", BlockType::ersm, false},        {"+LDIM", BlockType::plain, true},
          {"D-RSM+LDIM", BlockType::drsm, true},    {"ERSM+LDIM", BlockType::ersm, true}};
}

struct AblationRow {
  AblationVariant variant;
  std::size_t params = 0;
  std::uint64_t macs = 0;
  std::vector<double> psnr;  // one per seed
  std::vector<double> ssim;
  std::vector<double> final_loss;
  double mean_psnr() const { return std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size()); }
  double mean_ssim() const { return std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(ssim.size()); }
};

/// Trains and evaluates each variant under every seed with the same budget.
template <typename T>
std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& tcfg,
                                      const std::vector<ImagePair>& data, const std::vector<std::uint64_t>& seeds,
                                      const std::vector<AblationVariant>& variants = ablation_variants(),
                                      const std::function<void(const AblationRow&, std::size_t)>& on_run = {}) {
  if (seeds.empty()) throw ConfigError("run_ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ModelConfig mcfg = base;
    mcfg.block_type = v.block;
    mcfg.use_ldim = v.ldim;
    AblationRow row;
    row.variant = v;
    {
      const auto m = build_model<T>(mcfg, 0);
      row.params = count_parameters(m);
      row.macs = count_macs(m, tcfg.patch, tcfg.patch);
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      TrainConfig c = tcfg;
      c.seed = seeds[i];
      const auto res = train<T>(mcfg, c, data);
      row.psnr.push_back(res.final_eval.mean_psnr);
      row.ssim.push_back(res.final_eval.mean_ssim);
      row.final_loss.push_back(res.trace.back().total);
      if (on_run) on_run(row, i);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ccnet
