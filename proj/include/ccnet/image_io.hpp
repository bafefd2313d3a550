#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

/// RGB image in [0, 1], shape (1, 3, H, W).
using Image = Tensor<float>;

/// Reads any PNG libpng understands and converts it to 8-bit RGB.
inline Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const std::size_t H = img.height, W = img.width;
  Image out({1, 3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) out(0, c, y, x) = buf[(y * W + x) * 3 + c] / 255.0f;
  return out;
}

inline std::uint8_t quantize_unit(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Writes image 0 of the batch as 8-bit RGB; values are clamped to [0, 1].
inline void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.c() != 3 || image.n() < 1) throw DimensionError("write_png expects (N,3,H,W), got " + shape_str(image.shape()));
  const std::size_t H = image.h(), W = image.w();
  std::vector<std::uint8_t> buf(H * W * 3);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) buf[(y * W + x) * 3 + c] = quantize_unit(image(0, c, y, x));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace ccnet
