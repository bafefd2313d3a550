#pragma once

// Synthetic paired data: procedural clean images degraded by haze (atmospheric
// scattering), linear motion blur, or composited snow flakes. Everything is a
// pure function of (spec, seed).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccnet/image_io.hpp"

namespace ccnet {

enum class DegradationKind { haze, motion_blur, snow };

inline std::string to_string(DegradationKind k) {
  switch (k) {
    case DegradationKind::haze: return "haze";
    case DegradationKind::motion_blur: return "motion_blur";
    case DegradationKind::snow: return "snow";
  }
  return "?";
}

inline DegradationKind parse_degradation_kind(const std::string& s) {
  if (s == "haze") return DegradationKind::haze;
  if (s == "motion_blur") return DegradationKind::motion_blur;
  if (s == "snow") return DegradationKind::snow;
  throw ConfigError("unknown degradation kind '" + s + "'");
}

struct HazeParams {
  std::array<double, 3> airlight{0.9, 0.9, 0.9};  // each in [0.7, 1.0]
  double beta = 1.0;                              // > 0 (0 disables haze)
  std::optional<double> constant_depth;           // overrides the random depth field
};

struct BlurParams {
  std::size_t length = 9;  // odd, 1 (identity) or [3, 21]
  double angle = 0.0;      // radians
};

struct SnowParams {
  double density = 0.004;  // flakes per pixel
  double min_size = 1.0;   // semi-axis range, pixels
  double max_size = 3.0;
  double opacity = 0.9;    // [0, 1]
  double color = 1.0;      // flake grey level
};

struct DegradationSpec {
  DegradationKind kind = DegradationKind::haze;
  HazeParams haze;
  BlurParams blur;
  SnowParams snow;

  void validate() const {
    for (double a : haze.airlight)
      if (a < 0.7 || a > 1.0) throw ConfigError("haze airlight must lie in [0.7, 1.0]");
    if (haze.beta < 0.0) throw ConfigError("haze beta must be non-negative");
    if (haze.constant_depth && *haze.constant_depth < 0.0) throw ConfigError("haze depth must be >= 0");
    if (blur.length % 2 == 0 || blur.length > 21 || (blur.length > 1 && blur.length < 3)) {
      throw ConfigError("blur length must be 1 or odd in [3, 21]");
    }
    if (snow.density < 0.0) throw ConfigError("snow density must be non-negative");
    if (snow.min_size <= 0.0 || snow.max_size < snow.min_size) throw ConfigError("bad snow size range");
    if (snow.opacity < 0.0 || snow.opacity > 1.0) throw ConfigError("snow opacity must be in [0, 1]");
    if (snow.color < 0.0 || snow.color > 1.0) throw ConfigError("snow color must be in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const DegradationSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case DegradationKind::haze:
      j["airlight"] = s.haze.airlight;
      j["beta"] = s.haze.beta;
      if (s.haze.constant_depth) j["constant_depth"] = *s.haze.constant_depth;
      break;
    case DegradationKind::motion_blur:
      j["length"] = s.blur.length;
      j["angle"] = s.blur.angle;
      break;
    case DegradationKind::snow:
      j["density"] = s.snow.density;
      j["min_size"] = s.snow.min_size;
      j["max_size"] = s.snow.max_size;
      j["opacity"] = s.snow.opacity;
      j["color"] = s.snow.color;
      break;
  }
}

inline void from_json(const nlohmann::json& j, DegradationSpec& s) {
  s = DegradationSpec{};
  s.kind = parse_degradation_kind(j.at("kind").get<std::string>());
  s.haze.airlight = j.value("airlight", s.haze.airlight);
  s.haze.beta = j.value("beta", s.haze.beta);
  if (j.contains("constant_depth")) s.haze.constant_depth = j.at("constant_depth").get<double>();
  s.blur.length = j.value("length", s.blur.length);
  s.blur.angle = j.value("angle", s.blur.angle);
  s.snow.density = j.value("density", s.snow.density);
  s.snow.min_size = j.value("min_size", s.snow.min_size);
  s.snow.max_size = j.value("max_size", s.snow.max_size);
  s.snow.opacity = j.value("opacity", s.snow.opacity);
  s.snow.color = j.value("color", s.snow.color);
}

/// SplitMix64 step; used to derive independent per-image seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Smooth field in [0, 1]: bilinear upsampling of a coarse random grid, rescaled.
inline std::vector<double> smooth_field(std::size_t h, std::size_t w, std::size_t grid, Rng& rng) {
  std::vector<double> coarse((grid + 1) * (grid + 1));
  for (double& v : coarse) v = uniform(rng, 0.0, 1.0);
  std::vector<double> f(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double gy = static_cast<double>(y) / std::max<std::size_t>(h - 1, 1) * grid;
      const double gx = static_cast<double>(x) / std::max<std::size_t>(w - 1, 1) * grid;
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), grid - 1);
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), grid - 1);
      const double ty = gy - y0, tx = gx - x0;
      auto at = [&](std::size_t yy, std::size_t xx) { return coarse[yy * (grid + 1) + xx]; };
      f[y * w + x] = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                     ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
    }
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : f) v = span > 0 ? (v - a) / span : 0.0;
  return f;
}

inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace detail

/// I = J·t + A·(1 - t), t = exp(-β·d), with d a smooth random depth field in [0, 1].
inline Image synth_haze(const Image& clean, const DegradationSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t H = clean.h(), W = clean.w();
  std::vector<double> depth;
  if (spec.haze.constant_depth) {
    depth.assign(H * W, *spec.haze.constant_depth);
  } else {
    Rng rng(seed);
    depth = detail::smooth_field(H, W, 4, rng);
  }
  Image out(clean.shape());
  for (std::size_t n = 0; n < clean.n(); ++n)
    for (std::size_t c = 0; c < clean.c(); ++c) {
      const double a = spec.haze.airlight[c % 3];
      const float* src = clean.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < H * W; ++i) {
        const double t = std::exp(-spec.haze.beta * depth[i]);
        dst[i] = static_cast<float>(src[i] * t + a * (1.0 - t));
      }
    }
  return out;
}

/// Normalized line kernel (length×length) at `angle`, bilinearly rasterized.
inline std::vector<double> motion_kernel(std::size_t length, double angle) {
  std::vector<double> k(length * length, 0.0);
  const double center = static_cast<double>(length - 1) / 2.0;
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) - center;
    const double px = center + t * dx, py = center + t * dy;
    const double fx = std::floor(px), fy = std::floor(py);
    const double ax = px - fx, ay = py - fy;
    const std::array<std::pair<double, double>, 4> taps{{{fy, fx}, {fy, fx + 1}, {fy + 1, fx}, {fy + 1, fx + 1}}};
    const std::array<double, 4> wts{(1 - ay) * (1 - ax), (1 - ay) * ax, ay * (1 - ax), ay * ax};
    for (std::size_t j = 0; j < 4; ++j) {
      const auto [yy, xx] = taps[j];
      if (wts[j] == 0.0 || yy < 0 || xx < 0 || yy >= length || xx >= length) continue;
      k[static_cast<std::size_t>(yy) * length + static_cast<std::size_t>(xx)] += wts[j];
    }
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
  return k;
}

/// Convolution with a normalized line kernel; borders reflect (without edge repeat).
inline Image synth_motion_blur(const Image& clean, const DegradationSpec& spec, std::uint64_t /*seed*/) {
  spec.validate();
  const std::size_t L = spec.blur.length;
  if (L == 1) return clean;
  const auto k = motion_kernel(L, spec.blur.angle);
  const auto H = static_cast<std::ptrdiff_t>(clean.h()), W = static_cast<std::ptrdiff_t>(clean.w());
  const auto half = static_cast<std::ptrdiff_t>(L / 2);
  Image out(clean.shape());
  for (std::size_t n = 0; n < clean.n(); ++n)
    for (std::size_t c = 0; c < clean.c(); ++c) {
      const float* src = clean.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(L); ++i)
            for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(L); ++j) {
              const double kv = k[i * L + j];
              if (kv == 0.0) continue;
              // Correlation form; the line kernel is point-symmetric so this equals convolution.
              const std::ptrdiff_t yy = detail::reflect_index(y + i - half, H);
              const std::ptrdiff_t xx = detail::reflect_index(x + j - half, W);
              acc += kv * src[yy * W + xx];
            }
          dst[y * W + x] = static_cast<float>(acc);
        }
    }
  return out;
}

/// Alpha-composites randomly placed soft elliptical flakes. Alpha equals the
/// opacity inside half the semi-axes and falls smoothly to zero at the rim.
inline Image synth_snow(const Image& clean, const DegradationSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t H = clean.h(), W = clean.w();
  Image out = clean;
  Rng rng(seed);
  const auto flakes = static_cast<std::size_t>(std::llround(spec.snow.density * static_cast<double>(H * W)));
  for (std::size_t f = 0; f < flakes; ++f) {
    const double cy = detail::uniform(rng, 0.0, static_cast<double>(H));
    const double cx = detail::uniform(rng, 0.0, static_cast<double>(W));
    const double ry = detail::uniform(rng, spec.snow.min_size, spec.snow.max_size);
    const double rx = detail::uniform(rng, spec.snow.min_size, spec.snow.max_size);
    const double rot = detail::uniform(rng, 0.0, std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double reach = std::max(rx, ry) + 1.0;
    const auto y0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cy - reach)));
    const auto y1 = static_cast<std::ptrdiff_t>(std::min<double>(H - 1, std::ceil(cy + reach)));
    const auto x0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cx - reach)));
    const auto x1 = static_cast<std::ptrdiff_t>(std::min<double>(W - 1, std::ceil(cx + reach)));
    for (std::ptrdiff_t y = y0; y <= y1; ++y)
      for (std::ptrdiff_t x = x0; x <= x1; ++x) {
        const double py = y + 0.5 - cy, px = x + 0.5 - cx;
        const double u = (px * cr + py * sr) / rx, v = (-px * sr + py * cr) / ry;
        const double r = std::sqrt(u * u + v * v);
        if (r >= 1.0) continue;
        double shape = 1.0;
        if (r > 0.5) {
          const double t = (1.0 - r) / 0.5;
          shape = t * t * (3.0 - 2.0 * t);
        }
        const double alpha = spec.snow.opacity * shape;
        for (std::size_t n = 0; n < out.n(); ++n)
          for (std::size_t c = 0; c < out.c(); ++c) {
            float& p = out(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            p = static_cast<float>(p * (1.0 - alpha) + spec.snow.color * alpha);
          }
      }
  }
  return out;
}

inline Image degrade(const Image& clean, const DegradationSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case DegradationKind::haze: return synth_haze(clean, spec, seed);
    case DegradationKind::motion_blur: return synth_motion_blur(clean, spec, seed);
    case DegradationKind::snow: return synth_snow(clean, spec, seed);
  }
  return clean;
}

/// Draws concrete per-image parameters of `base.kind` from the documented ranges.
inline DegradationSpec sample_spec(const DegradationSpec& base, Rng& rng) {
  DegradationSpec s = base;
  switch (base.kind) {
    case DegradationKind::haze: {
      const double a = detail::uniform(rng, 0.7, 1.0);
      s.haze.airlight = {a, a, a};
      s.haze.beta = detail::uniform(rng, 0.6, 1.8);
      break;
    }
    case DegradationKind::motion_blur: {
      s.blur.length = 3 + 2 * std::uniform_int_distribution<std::size_t>(0, 9)(rng);
      s.blur.angle = detail::uniform(rng, 0.0, std::numbers::pi);
      break;
    }
    case DegradationKind::snow: {
      s.snow.density = detail::uniform(rng, 0.5, 1.5) * base.snow.density;
      break;
    }
  }
  return s;
}

/// Procedural clean image: smooth colour gradient, a few flat shapes, and
/// low-amplitude texture.
inline Image generate_clean_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Image img({1, 3, h, w});
  std::array<double, 3> c0, cx, cy;
  for (std::size_t c = 0; c < 3; ++c) {
    c0[c] = detail::uniform(rng, 0.1, 0.7);
    cx[c] = detail::uniform(rng, -0.3, 0.3);
    cy[c] = detail::uniform(rng, -0.3, 0.3);
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img(0, c, y, x) = static_cast<float>(c0[c] + cx[c] * x / static_cast<double>(w) +
                                             cy[c] * y / static_cast<double>(h));
  const std::size_t shapes = 3 + std::uniform_int_distribution<std::size_t>(0, 4)(rng);
  for (std::size_t s = 0; s < shapes; ++s) {
    std::array<double, 3> col;
    for (double& v : col) v = detail::uniform(rng, 0.0, 1.0);
    const double py = detail::uniform(rng, 0.0, h), px = detail::uniform(rng, 0.0, w);
    const double ry = detail::uniform(rng, 0.08, 0.3) * h, rx = detail::uniform(rng, 0.08, 0.3) * w;
    const bool ellipse = std::bernoulli_distribution(0.5)(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double u = (x + 0.5 - px) / rx, v = (y + 0.5 - py) / ry;
        const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) img(0, c, y, x) = static_cast<float>(col[c]);
      }
  }
  const auto texture = detail::smooth_field(h, w, std::max<std::size_t>(2, w / 6), rng);
  const double amp = detail::uniform(rng, 0.02, 0.08);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) {
      float& p = img.plane(0, c)[i];
      p = std::clamp(static_cast<float>(p + amp * (texture[i] - 0.5)), 0.0f, 1.0f);
    }
  return img;
}

struct ImagePair {
  Image degraded;
  Image clean;
};

/// Identical random crop and identical horizontal-flip decision for both images.
inline ImagePair extract_patches(const ImagePair& pair, std::size_t patch, double hflip_prob, Rng& rng) {
  pair.degraded.require_same_shape(pair.clean, "extract_patches");
  const std::size_t H = pair.clean.h(), W = pair.clean.w();
  if (patch == 0 || patch > H || patch > W) {
    throw InputError("patch size " + std::to_string(patch) + " does not fit image " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, H - patch)(rng);
  const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, W - patch)(rng);
  const bool flip = hflip_prob > 0.0 && std::bernoulli_distribution(hflip_prob)(rng);
  auto crop = [&](const Image& src) {
    Image out({src.n(), src.c(), patch, patch});
    for (std::size_t n = 0; n < src.n(); ++n)
      for (std::size_t c = 0; c < src.c(); ++c)
        for (std::size_t y = 0; y < patch; ++y)
          for (std::size_t x = 0; x < patch; ++x)
            out(n, c, y, flip ? patch - 1 - x : x) = src(n, c, y0 + y, x0 + x);
    return out;
  };
  return {crop(pair.degraded), crop(pair.clean)};
}

inline Image hflip(const Image& src) {
  Image out(src.shape());
  const std::size_t W = src.w();
  for (std::size_t n = 0; n < src.n(); ++n)
    for (std::size_t c = 0; c < src.c(); ++c)
      for (std::size_t y = 0; y < src.h(); ++y)
        for (std::size_t x = 0; x < W; ++x) out(n, c, y, W - 1 - x) = src(n, c, y, x);
  return out;
}

struct ManifestEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  DegradationSpec spec;
  std::string degraded;  // relative to the dataset root
  std::string clean;
};

struct DatasetManifest {
  DegradationSpec spec;
  std::uint64_t seed = 0;
  std::size_t image_size = 0;
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline std::string pair_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.png", i);
  return buf;
}

inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("clean image directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG files in " + dir.string());
  return files;
}

}  // namespace detail

/// Synthesizes `count` pairs into out_dir/{degraded,clean}/NNNN.png plus a
/// manifest.jsonl (header line, then one line per pair). Clean images come
/// from clean_dir (cycled, sorted by name) or are generated when it is empty.
inline DatasetManifest make_dataset(const std::filesystem::path& clean_dir, const DegradationSpec& spec,
                                    const std::filesystem::path& out_dir, std::size_t count,
                                    std::uint64_t seed, std::size_t image_size = 64,
                                    bool randomize = true) {
  spec.validate();
  namespace fs = std::filesystem;
  std::vector<fs::path> sources;
  if (!clean_dir.empty()) sources = detail::list_pngs(clean_dir);
  std::error_code ec;
  fs::create_directories(out_dir / "degraded", ec);
  fs::create_directories(out_dir / "clean", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest{spec, seed, image_size, {}};
  for (std::size_t i = 0; i < count; ++i) {
    ManifestEntry e;
    e.index = i;
    e.seed = mix_seed(seed, i);
    Rng rng(e.seed);
    e.spec = randomize ? sample_spec(spec, rng) : spec;
    Image clean = sources.empty() ? generate_clean_image(image_size, image_size, mix_seed(e.seed, 1))
                                  : read_png(sources[i % sources.size()]);
    // Degrade the 8-bit quantized clean image so the stored pair is consistent.
    for (float& v : clean.values()) v = quantize_unit(v) / 255.0f;
    Image degraded = degrade(clean, e.spec, mix_seed(e.seed, 2));
    e.degraded = "degraded/" + detail::pair_name(i);
    e.clean = "clean/" + detail::pair_name(i);
    write_png(out_dir / e.degraded, degraded);
    write_png(out_dir / e.clean, clean);
    manifest.entries.push_back(std::move(e));
  }

  std::ofstream os(out_dir / "manifest.jsonl");
  if (!os) throw IoError("cannot write manifest in " + out_dir.string());
  os << nlohmann::json{{"format", "ccnet-dataset"}, {"version", 1}, {"count", count}, {"seed", seed},
                       {"image_size", image_size}, {"spec", spec}}
            .dump()
     << "\n";
  for (const auto& e : manifest.entries) {
    os << nlohmann::json{{"index", e.index}, {"seed", e.seed}, {"spec", e.spec},
                         {"degraded", e.degraded}, {"clean", e.clean}}
              .dump()
       << "\n";
  }
  return manifest;
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.jsonl";
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset manifest " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty dataset manifest " + path.string());
  DatasetManifest m;
  try {
    const auto head = nlohmann::json::parse(line);
    if (head.value("format", "") != "ccnet-dataset") throw IoError("not a dataset manifest: " + path.string());
    m.spec = head.at("spec").get<DegradationSpec>();
    m.seed = head.at("seed").get<std::uint64_t>();
    m.image_size = head.value("image_size", std::size_t{0});
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.index = j.at("index").get<std::size_t>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.spec = j.at("spec").get<DegradationSpec>();
      e.degraded = j.at("degraded").get<std::string>();
      e.clean = j.at("clean").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("malformed dataset manifest " + path.string() + ": " + ex.what());
  }
  return m;
}

inline std::vector<ImagePair> load_dataset(const std::filesystem::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  std::vector<ImagePair> pairs;
  for (const auto& e : m.entries) pairs.push_back({read_png(dir / e.degraded), read_png(dir / e.clean)});
  return pairs;
}

/// In-memory equivalent of make_dataset (same seeds, same quantization), no files.
inline std::vector<ImagePair> synth_pairs(const DegradationSpec& spec, std::size_t count, std::uint64_t seed,
                                          std::size_t image_size, bool randomize = true) {
  spec.validate();
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    Rng rng(s);
    const DegradationSpec concrete = randomize ? sample_spec(spec, rng) : spec;
    Image clean = generate_clean_image(image_size, image_size, mix_seed(s, 1));
    for (float& v : clean.values()) v = quantize_unit(v) / 255.0f;
    Image degraded = degrade(clean, concrete, mix_seed(s, 2));
    for (float& v : degraded.values()) v = quantize_unit(v) / 255.0f;
    pairs.push_back({std::move(degraded), std::move(clean)});
  }
  return pairs;
}

}  // namespace ccnet
