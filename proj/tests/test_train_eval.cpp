#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "ccnet/train.hpp"
#include "test_support.hpp"

using namespace ccnet;
using ccnet::testing::temp_dir;

namespace {

ModelConfig tiny_model(BlockType b = BlockType::ersm, bool ldim = true) {
  ModelConfig c;
  c.base_channels = 4;
  c.blocks_per_scale = 1;
  c.block_type = b;
  c.use_ldim = ldim;
  c.ldim_strips = {3, 5};
  c.k_dw = 3;
  return c;
}

TrainConfig tiny_train(std::size_t iterations = 6) {
  TrainConfig t;
  t.iterations = iterations;
  t.batch = 2;
  t.patch = 16;
  t.seed = 3;
  return t;
}

std::vector<ImagePair> tiny_data(std::size_t n = 3) { return synth_pairs(DegradationSpec{}, n, 9, 20); }

void expect_same_trace(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].iteration, b[i].iteration);
    EXPECT_EQ(a[i].lr, b[i].lr);
    EXPECT_EQ(a[i].spatial, b[i].spatial);
    EXPECT_EQ(a[i].frequency, b[i].frequency);
    EXPECT_EQ(a[i].total, b[i].total);
    EXPECT_EQ(a[i].psnr, b[i].psnr);
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void expect_same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    ASSERT_TRUE(std::filesystem::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  std::size_t other = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(b)) other += e.is_regular_file();
  EXPECT_EQ(files, other);
}

}  // namespace

TEST(CosineLr, EndpointsAndMidpoint) {
  TrainConfig c;
  c.iterations = 1000;
  EXPECT_DOUBLE_EQ(cosine_lr(0, c), 1e-4);
  EXPECT_DOUBLE_EQ(cosine_lr(1000, c), 1e-6);
  EXPECT_NEAR(cosine_lr(500, c), 5.05e-5, 1e-18);
  EXPECT_DOUBLE_EQ(cosine_lr(5000, c), 1e-6);
  for (std::size_t t = 1; t <= 1000; ++t) EXPECT_LE(cosine_lr(t, c), cosine_lr(t - 1, c));
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  ParamList<double> ps{{"w", Var<double>(Tensor<double>({1, 1, 1, 2}, 0.5), true)}};
  auto st = AdamState<double>::zeros_like(ps);
  st.m[0].fill(0.2);
  st.v[0].fill(0.04);
  st.step = 3;
  TrainConfig c;
  adam_step(ps, st, 1e-3, c);
  // m decays to 0.18, v to 0.03996, and the parameter still moves by the momentum.
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.9 * 0.2);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.999 * 0.04);

  ParamList<double> fresh{{"w", Var<double>(Tensor<double>({1, 1, 1, 2}, 0.5), true)}};
  auto zero = AdamState<double>::zeros_like(fresh);
  adam_step(fresh, zero, 1e-3, c);
  EXPECT_EQ(fresh[0].var.value()[0], 0.5);
  EXPECT_EQ(zero.m[0][0], 0.0);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradientSign) {
  Var<double> w(Tensor<double>({1, 1, 1, 3}, std::vector<double>{1.0, -2.0, 0.5}), true);
  ParamList<double> ps{{"w", w}};
  auto st = AdamState<double>::zeros_like(ps);
  backward(weighted_sum(w, Tensor<double>({1, 1, 1, 3}, std::vector<double>{3.0, -0.25, 40.0})));
  TrainConfig c;
  adam_step(ps, st, 1e-3, c);
  EXPECT_NEAR(w.value()[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(w.value()[1], -2.0 + 1e-3, 1e-10);
  EXPECT_NEAR(w.value()[2], 0.5 - 1e-3, 1e-10);
}

TEST(Adam, TwoStepsMatchHandRolledTrace) {
  const double lr = 2e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::vector<double> grads{0.7, -1.3};
  Var<double> w(Tensor<double>({1, 1, 1, 1}, 0.25), true);
  ParamList<double> ps{{"w", w}};
  auto st = AdamState<double>::zeros_like(ps);
  double hw = 0.25, m = 0, v = 0;
  for (std::size_t t = 1; t <= 2; ++t) {
    backward(weighted_sum(w, Tensor<double>({1, 1, 1, 1}, grads[t - 1])));
    adam_step(ps, st, lr, TrainConfig{});
    zero_grads(ps);
    m = b1 * m + (1 - b1) * grads[t - 1];
    v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
    const double mhat = m / (1 - std::pow(b1, double(t))), vhat = v / (1 - std::pow(b2, double(t)));
    hw -= lr * mhat / (std::sqrt(vhat) + eps);
    EXPECT_NEAR(w.value()[0], hw, 1e-12) << "step " << t;
    EXPECT_NEAR(st.m[0][0], m, 1e-15);
    EXPECT_NEAR(st.v[0][0], v, 1e-15);
  }
}

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_min = c.lr_max;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.patch = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_train();
  EXPECT_EQ(nlohmann::json(c).get<TrainConfig>(), c);
}

TEST(Sampling, EachEpochVisitsEveryPairOnce) {
  for (std::size_t epoch = 0; epoch < 4; ++epoch) {
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k < 7; ++k) seen.insert(detail::epoch_slot(5, epoch * 7 + k, 7));
    EXPECT_EQ(seen.size(), 7u);
  }
}

TEST(Sampling, BatchesArePureFunctionsOfSeedAndIteration) {
  Trainer<float> a(build_model<float>(tiny_model(), 1), tiny_train(), tiny_data());
  Trainer<float> b(build_model<float>(tiny_model(), 2), tiny_train(), tiny_data());
  for (std::size_t it : {0u, 5u, 3u}) {
    EXPECT_EQ(a.batch(it).first, b.batch(it).first);
    EXPECT_EQ(a.batch(it).second, b.batch(it).second);
  }
  EXPECT_NE(a.batch(0).first, a.batch(1).first);
}

TEST(Training, FixedSeedReproducesTraceBitExactly) {
  const auto r1 = train<float>(tiny_model(), tiny_train(), tiny_data());
  const auto r2 = train<float>(tiny_model(), tiny_train(), tiny_data());
  expect_same_trace(r1.trace, r2.trace);
  EXPECT_EQ(r1.final_eval.psnr, r2.final_eval.psnr);
  auto other = tiny_train();
  other.seed = 4;
  EXPECT_NE(train<float>(tiny_model(), other, tiny_data()).trace.back().total, r1.trace.back().total);
}

TEST(Training, LearningRateFollowsCosineSchedule) {
  const auto cfg = tiny_train();
  const auto r = train<float>(tiny_model(), cfg, tiny_data());
  for (const auto& rec : r.trace) EXPECT_EQ(rec.lr, cosine_lr(rec.iteration - 1, cfg));
  for (const auto& rec : r.trace) {
    EXPECT_NEAR(rec.total, rec.spatial + cfg.lambda * rec.frequency, 1e-6 * rec.total);
    EXPECT_TRUE(std::isfinite(rec.psnr));
  }
}

TEST(Training, ResumeContinuesTheExactTrace) {
  const auto data = tiny_data();
  const auto cfg = tiny_train(6);
  Trainer<float> straight(build_model<float>(tiny_model(), model_seed(cfg)), cfg, data);
  straight.run();

  Trainer<float> first(build_model<float>(tiny_model(), model_seed(cfg)), cfg, data);
  std::vector<StepRecord> head;
  for (int i = 0; i < 3; ++i) head.push_back(first.step());
  const auto dir = temp_dir("resume");
  first.save(dir);

  Trainer<float> second(build_model<float>(tiny_model(), 12345), cfg, data);
  second.load(dir);
  EXPECT_EQ(second.iteration(), 3u);
  second.run();
  std::vector<StepRecord> joined = head;
  joined.insert(joined.end(), second.trace().begin(), second.trace().end());
  expect_same_trace(joined, straight.trace());
  EXPECT_EQ(second.checkpoint(), straight.checkpoint());
}

TEST(Training, NonFiniteLossAborts) {
  auto data = tiny_data(1);
  data[0].degraded[7] = std::numeric_limits<float>::quiet_NaN();
  auto cfg = tiny_train(2);
  cfg.patch = 20;
  Trainer<float> t(build_model<float>(tiny_model(), 1), cfg, data);
  try {
    t.step();
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(Training, EmptyDatasetIsRejected) {
  EXPECT_THROW(Trainer<float>(build_model<float>(tiny_model(), 1), tiny_train(), {}), InputError);
}

TEST(Training, SingleIterationRunWritesLoadableOutputs) {
  const auto dir = temp_dir("smoke");
  const auto cfg = tiny_train(1);
  const auto r = train<float>(tiny_model(), cfg, tiny_data(), dir);
  ASSERT_EQ(r.trace.size(), 1u);
  std::ifstream log(dir / "metrics.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(log, line));
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"iteration", "lr", "L_s", "L_f", "L", "psnr"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_FALSE(std::getline(log, line));
  const ModelConfig expected = tiny_model();
  const auto ck = load_checkpoint<float>(dir / "checkpoint", &expected);
  EXPECT_EQ(ck.iteration, 1u);
  EXPECT_EQ(ck.train_cfg, cfg);
  auto m = build_model<float>(tiny_model(), 99);
  EXPECT_NO_THROW(restore_checkpoint(ck, m));
}

TEST(Checkpoint, SaveLoadSaveIsBitIdentical) {
  const auto cfg = tiny_train(2);
  Trainer<float> t(build_model<float>(tiny_model(), 5), cfg, tiny_data());
  t.run();
  const auto a = temp_dir("a"), b = temp_dir("b");
  t.save(a);
  const auto loaded = load_checkpoint<float>(a);
  EXPECT_EQ(loaded, t.checkpoint());
  save_checkpoint(b, loaded);
  expect_same_tree(a, b);
}

TEST(Checkpoint, DigestAndLayoutMismatchesAreErrors) {
  const auto cfg = tiny_train(1);
  Trainer<float> t(build_model<float>(tiny_model(), 5), cfg, tiny_data());
  t.run();
  const auto dir = temp_dir("ck");
  t.save(dir);
  const ModelConfig other = tiny_model(BlockType::drsm);
  EXPECT_THROW(load_checkpoint<float>(dir, &other), ConfigError);
  auto wrong = build_model<float>(other, 0);
  EXPECT_THROW(restore_checkpoint(load_checkpoint<float>(dir), wrong), ConfigError);
  EXPECT_THROW(load_checkpoint<double>(dir), IoError);

  auto changed = cfg;
  changed.lr_max = 2e-4;
  Trainer<float> u(build_model<float>(tiny_model(), 5), changed, tiny_data());
  EXPECT_THROW(u.load(dir), ConfigError);

  // Tampering with the stored configuration breaks its digest.
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  manifest["model_config"]["k_dw"] = 5;
  std::ofstream(dir / "manifest.json") << manifest.dump();
  EXPECT_THROW(load_checkpoint<float>(dir), ConfigError);
}

TEST(Checkpoint, TruncatedBlobIsIoError) {
  Trainer<float> t(build_model<float>(tiny_model(), 5), tiny_train(1), tiny_data());
  const auto dir = temp_dir("trunc");
  t.save(dir);
  const auto blob = dir / "params" / "stem.weight.bin";
  const auto bytes = slurp(blob);
  std::ofstream(blob, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_checkpoint<float>(dir), IoError);
  std::ofstream(blob, std::ios::binary | std::ios::trunc) << bytes << 'x';
  EXPECT_THROW(load_checkpoint<float>(dir), IoError);
}

TEST(Evaluate, IdentityModelOnCleanPairsIsPerfect) {
  auto data = tiny_data(2);
  for (auto& p : data) p.degraded = p.clean;
  const auto m = build_model<float>(tiny_model(), 1);
  const auto r = evaluate(m, data);
  EXPECT_TRUE(std::isinf(r.mean_psnr));
  EXPECT_EQ(r.mean_ssim, 1.0);
  EXPECT_TRUE(nlohmann::json(r)["mean_psnr"].is_null());
  EXPECT_THROW(evaluate(m, {}), InputError);
}

TEST(Evaluate, ReportMatchesPerImageRecomputation) {
  auto m = build_model<float>(tiny_model(), 1);
  for (auto& p : m.parameters()) {
    Var<float> v = p.var;
    for (std::size_t i = 0; i < v.size(); ++i) v.mutable_value()[i] = 0.05f * std::sin(float(i) + 1.0f);
  }
  const auto data = tiny_data(3);
  const auto r = evaluate(m, data);
  ASSERT_EQ(r.psnr.size(), 3u);
  double mean = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    NoGradGuard g;
    const auto out = clamp_unit(forward_multiscale(m, data[i].degraded).restored[0].value());
    for (float v : out.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    EXPECT_EQ(r.psnr[i], psnr(out, data[i].clean));
    EXPECT_EQ(r.ssim[i], ssim(out, data[i].clean));
    mean += r.psnr[i] / 3.0;
  }
  EXPECT_NEAR(r.mean_psnr, mean, 1e-12);
}

TEST(SmoothedLoss, NonOverlappingWindowsAfterWarmup) {
  std::vector<StepRecord> trace;
  for (std::size_t i = 1; i <= 10; ++i) trace.push_back({i, 0, 0, 0, double(i), 0});
  EXPECT_EQ(smoothed_loss(trace, 2, 4), (std::vector<double>{5.5, 7.5, 9.5}));
  EXPECT_EQ(smoothed_loss(trace, 4, 0), (std::vector<double>{2.5, 6.5}));
}

TEST(Ablation, SixVariantsWithMatchedParameterCounts) {
  const auto rows = run_ablation<float>(tiny_model(), tiny_train(1), tiny_data(2), {1});
  ASSERT_EQ(rows.size(), 6u);
  std::map<std::string, const AblationRow*> by;
  for (const auto& r : rows) {
    by[r.variant.name] = &r;
    ASSERT_EQ(r.psnr.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.mean_psnr())) << r.variant.name;
    EXPECT_TRUE(std::isfinite(r.mean_ssim()));
    EXPECT_TRUE(std::isfinite(r.final_loss[0]));
  }
  EXPECT_EQ(by.at("+ERSM")->params, by.at("+D-RSM")->params);
  EXPECT_EQ(by.at("ERSM+LDIM")->params, by.at("D-RSM+LDIM")->params);
  EXPECT_GT(by.at("+LDIM")->params, by.at("baseline")->params);
  EXPECT_THROW(run_ablation<float>(tiny_model(), tiny_train(1), tiny_data(2), {}), ConfigError);
}
