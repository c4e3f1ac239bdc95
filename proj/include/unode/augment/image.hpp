#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unode/core/error.hpp"

namespace unode {

/// C x H x W image with pixels in [0, 1], channel-major.
struct ImageSample {
  std::uint32_t channels = 1;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> pixels;
  std::optional<std::uint32_t> label;

  ImageSample() = default;
  ImageSample(std::uint32_t c, std::uint32_t h, std::uint32_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(std::size_t{c} * h * w, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  std::size_t plane() const noexcept { return std::size_t{height} * width; }

  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const { return pixels[(c * height + y) * width + x]; }

  bool same_shape(const ImageSample& other) const noexcept {
    return channels == other.channels && height == other.height && width == other.width;
  }

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

inline void validate(const ImageSample& img) {
  if (img.channels == 0 || img.height == 0 || img.width == 0) fail_data("image has an empty dimension");
  if (img.pixels.size() != std::size_t{img.channels} * img.height * img.width) {
    fail_data("image pixel count does not match C*H*W");
  }
  for (float v : img.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) fail_data("image pixel outside [0,1]");
  }
}

inline void clamp01(ImageSample& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

/// Bilinear sample of one channel at continuous pixel-center coordinates, edge-replicated.
inline float sample_bilinear(const ImageSample& img, std::uint32_t c, double y, double x) {
  const double maxy = img.height - 1.0, maxx = img.width - 1.0;
  y = std::clamp(y, 0.0, maxy);
  x = std::clamp(x, 0.0, maxx);
  const auto y0 = static_cast<std::uint32_t>(y), x0 = static_cast<std::uint32_t>(x);
  const std::uint32_t y1 = std::min<std::uint32_t>(y0 + 1, img.height - 1);
  const std::uint32_t x1 = std::min<std::uint32_t>(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
  const double bot = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

/// Separable Gaussian blur with edge replication; radius ceil(2 sigma), at least 1.
inline ImageSample gaussian_blur(const ImageSample& img, double sigma, int radius = -1) {
  if (radius < 0) radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  ImageSample tmp = img, out = img;
  for (std::uint32_t c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  clamp01(out);
  return out;
}

}  // namespace unode
