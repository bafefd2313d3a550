#include <cmath>
#include <fstream>
#include <iterator>

#include "ccnet/data_synth.hpp"
#include "test_support.hpp"

using namespace ccnet;
using ccnet::testing::temp_dir;

namespace {

Image test_image(std::uint64_t seed, std::size_t h = 24, std::size_t w = 20) {
  return generate_clean_image(h, w, seed);
}

DegradationSpec haze(double beta, std::optional<double> depth = std::nullopt, double a = 0.9) {
  DegradationSpec s;
  s.kind = DegradationKind::haze;
  s.haze.beta = beta;
  s.haze.airlight = {a, a, a};
  s.haze.constant_depth = depth;
  return s;
}

bool in_unit_range(const Image& im) {
  for (float v : im.values())
    if (!(v >= 0.0f && v <= 1.0f)) return false;
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Haze, ZeroBetaIsIdentity) {
  const Image j = test_image(1);
  EXPECT_EQ(synth_haze(j, haze(0.0), 7), j);
}

TEST(Haze, OpaqueLimitGivesAirlight) {
  const Image j = test_image(2);
  const Image out = synth_haze(j, haze(1.0, 1e6, 0.8), 7);
  for (float v : out.values()) EXPECT_FLOAT_EQ(v, 0.8f);
}

TEST(Haze, ClosedFormMidCase) {
  const Image j = test_image(3);
  const Image out = synth_haze(j, haze(1.0, 0.5, 1.0), 7);
  const double t = std::exp(-0.5);
  for (std::size_t i = 0; i < j.size(); ++i)
    EXPECT_FLOAT_EQ(out[i], static_cast<float>(j[i] * t + (1.0 - t)));
}

TEST(Haze, RandomDepthStaysBetweenCleanAndAirlight) {
  const Image j = test_image(4);
  const Image out = synth_haze(j, haze(1.5), 8);
  EXPECT_TRUE(in_unit_range(out));
  for (std::size_t i = 0; i < j.size(); ++i) {
    EXPECT_GE(out[i], std::min(j[i], 0.9f) - 1e-6f);
    EXPECT_LE(out[i], std::max(j[i], 0.9f) + 1e-6f);
  }
  EXPECT_EQ(synth_haze(j, haze(1.5), 8), out);
  EXPECT_NE(synth_haze(j, haze(1.5), 9), out);
}

TEST(MotionBlur, UnitLengthAndConstantImageAreUnchanged) {
  DegradationSpec s;
  s.kind = DegradationKind::motion_blur;
  s.blur.length = 1;
  const Image j = test_image(5);
  EXPECT_EQ(synth_motion_blur(j, s, 0), j);
  s.blur.length = 9;
  s.blur.angle = 0.7;
  const Image flat({1, 3, 16, 16}, 0.42f);
  const Image blurred = synth_motion_blur(flat, s, 0);
  for (float v : blurred.values()) EXPECT_NEAR(v, 0.42f, 1e-6f);
}

TEST(MotionBlur, HorizontalStepEdgeRamp) {
  DegradationSpec s;
  s.kind = DegradationKind::motion_blur;
  s.blur.length = 3;
  s.blur.angle = 0.0;
  Image step({1, 1, 3, 8});
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 4; x < 8; ++x) step(0, 0, y, x) = 1.0f;
  const Image out = synth_motion_blur(step, s, 0);
  // Hand convolution with [1/3, 1/3, 1/3]: ... 0, 1/3, 2/3, 1 ...
  const std::vector<float> row{0, 0, 0, 1.0f / 3, 2.0f / 3, 1, 1, 1};
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_NEAR(out(0, 0, y, x), row[x], 1e-6f) << y << "," << x;
}

TEST(MotionBlur, KernelIsNormalized) {
  for (std::size_t L : {3u, 7u, 21u})
    for (double a : {0.0, 0.3, 1.2, 2.9}) {
      const auto k = motion_kernel(L, a);
      double sum = 0;
      for (double v : k) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Snow, ZeroDensityIsIdentity) {
  DegradationSpec s;
  s.kind = DegradationKind::snow;
  s.snow.density = 0.0;
  const Image j = test_image(6);
  EXPECT_EQ(synth_snow(j, s, 3), j);
}

TEST(Snow, OpaqueFlakesPaintFlakeColourAndAreDeterministic) {
  DegradationSpec s;
  s.kind = DegradationKind::snow;
  s.snow.density = 0.05;
  s.snow.opacity = 1.0;
  s.snow.color = 0.95;
  s.snow.min_size = 3.0;
  s.snow.max_size = 4.0;
  const Image j({1, 3, 32, 32}, 0.1f);
  const Image out = synth_snow(j, s, 11);
  EXPECT_TRUE(in_unit_range(out));
  std::size_t painted = 0;
  for (float v : out.values()) painted += std::abs(v - 0.95f) < 1e-6f;
  EXPECT_GT(painted, 0u);
  EXPECT_EQ(synth_snow(j, s, 11), out);
}

TEST(Degradation, ValidationRejectsOutOfRangeParameters) {
  DegradationSpec s = haze(1.0, std::nullopt, 0.5);
  EXPECT_THROW(s.validate(), ConfigError);
  s = DegradationSpec{};
  s.blur.length = 4;
  EXPECT_THROW(s.validate(), ConfigError);
  s = DegradationSpec{};
  s.snow.opacity = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_degradation_kind("rain"), ConfigError);
}

TEST(Degradation, SampledSpecsStayInRange) {
  Rng rng(12);
  for (DegradationKind k : {DegradationKind::haze, DegradationKind::motion_blur, DegradationKind::snow}) {
    DegradationSpec base;
    base.kind = k;
    for (int i = 0; i < 200; ++i) {
      const auto s = sample_spec(base, rng);
      EXPECT_NO_THROW(s.validate());
      const Image out = degrade(test_image(i, 16, 16), s, i);
      EXPECT_TRUE(in_unit_range(out)) << to_string(k);
    }
  }
}

TEST(Patches, WindowStaysInBoundsAndPairStaysAligned) {
  const Image clean = test_image(13, 40, 36);
  Image degraded = clean;
  for (float& v : degraded.values()) v = 1.0f - v;
  const ImagePair pair{degraded, clean};
  Rng rng(14);
  std::size_t flips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ImagePair p = extract_patches(pair, 16, 0.5, rng);
    ASSERT_EQ(p.clean.shape(), (Shape{1, 3, 16, 16}));
    for (std::size_t i = 0; i < p.clean.size(); ++i) ASSERT_EQ(p.degraded[i], 1.0f - p.clean[i]);
    // Locate the window: the crop must be a sub-block of the source (possibly mirrored).
    bool found = false;
    for (std::size_t y0 = 0; y0 + 16 <= 40 && !found; ++y0)
      for (std::size_t x0 = 0; x0 + 16 <= 36 && !found; ++x0)
        for (bool flip : {false, true}) {
          bool match = true;
          for (std::size_t c = 0; c < 3 && match; ++c)
            for (std::size_t y = 0; y < 16 && match; ++y)
              for (std::size_t x = 0; x < 16 && match; ++x)
                match = p.clean(0, c, y, flip ? 15 - x : x) == clean(0, c, y0 + y, x0 + x);
          if (match) {
            found = true;
            flips += flip;
            break;
          }
        }
    ASSERT_TRUE(found) << trial;
  }
  EXPECT_GT(flips, 400u);
  EXPECT_LT(flips, 600u);
}

TEST(Patches, NoFlipProbabilityMeansPlainCrop) {
  const Image clean = test_image(15, 16, 16);
  Rng rng(16);
  const auto p = extract_patches({clean, clean}, 16, 0.0, rng);
  EXPECT_EQ(p.clean, clean);
  EXPECT_THROW(extract_patches({clean, clean}, 17, 0.0, rng), InputError);
}

TEST(Patches, DoubleFlipIsIdentity) {
  const Image j = test_image(17);
  EXPECT_EQ(hflip(hflip(j)), j);
  EXPECT_NE(hflip(j), j);
}

TEST(Dataset, WritesPairsAndManifestAndReloadsThem) {
  const auto dir = temp_dir("ds");
  DegradationSpec spec;
  const auto m = make_dataset({}, spec, dir, 5, 21, 32);
  EXPECT_EQ(m.entries.size(), 5u);
  const auto back = read_manifest(dir);
  EXPECT_EQ(back.entries.size(), 5u);
  EXPECT_EQ(back.seed, 21u);
  EXPECT_EQ(back.entries[3].degraded, "degraded/0003.png");
  const auto pairs = load_dataset(dir);
  const auto mem = synth_pairs(spec, 5, 21, 32);
  ASSERT_EQ(pairs.size(), mem.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].clean, mem[i].clean);
    EXPECT_EQ(pairs[i].degraded, mem[i].degraded);
    EXPECT_TRUE(in_unit_range(pairs[i].degraded));
  }
}

TEST(Dataset, SameSeedRegeneratesIdenticalFiles) {
  const auto a = temp_dir("a"), b = temp_dir("b");
  DegradationSpec spec;
  spec.kind = DegradationKind::snow;
  make_dataset({}, spec, a, 3, 5, 24);
  make_dataset({}, spec, b, 3, 5, 24);
  for (const char* f : {"manifest.jsonl", "degraded/0000.png", "clean/0002.png", "degraded/0002.png"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Dataset, ZeroCountGivesEmptyManifest) {
  const auto dir = temp_dir("empty");
  make_dataset({}, DegradationSpec{}, dir, 0, 1, 16);
  EXPECT_TRUE(read_manifest(dir).entries.empty());
}

TEST(Dataset, UsesCleanDirectoryWhenGiven) {
  const auto src = temp_dir("src"), out = temp_dir("out");
  const Image a = test_image(30, 16, 16);
  write_png(src / "b.png", a);
  write_png(src / "a.png", test_image(31, 16, 16));
  const auto m = make_dataset(src, DegradationSpec{}, out, 3, 2, 16);
  const auto pairs = load_dataset(out);
  // sorted order: a.png, b.png, a.png
  EXPECT_EQ(pairs[1].clean, read_png(src / "b.png"));
  EXPECT_EQ(pairs[2].clean, pairs[0].clean);
}

TEST(Dataset, MissingInputsAreIoErrors) {
  EXPECT_THROW(make_dataset("/nonexistent/clean", DegradationSpec{}, temp_dir("x"), 1, 0, 16), IoError);
  EXPECT_THROW(read_manifest(temp_dir("none")), IoError);
  EXPECT_THROW(read_png("/nonexistent.png"), IoError);
}

TEST(PngIo, EightBitRoundTrip) {
  const auto dir = temp_dir("png");
  Image im({1, 3, 5, 7});
  for (std::size_t i = 0; i < im.size(); ++i) im[i] = float(i % 256) / 255.0f;
  write_png(dir / "x.png", im);
  const Image back = read_png(dir / "x.png");
  ASSERT_EQ(back.shape(), im.shape());
  for (std::size_t i = 0; i < im.size(); ++i) EXPECT_FLOAT_EQ(back[i], im[i]);
}
