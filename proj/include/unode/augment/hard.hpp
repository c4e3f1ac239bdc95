#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "unode/augment/image.hpp"
#include "unode/core/rng.hpp"

namespace unode {

/// Distribution-shifting augmentations used to synthesize negatives.
enum class HardAugKind { Rotate90, Rotate180, Rotate270, Permute4, GaussianNoise, CutOut, CutPaste, Sobel, Blur, MixUp };

inline constexpr std::array<HardAugKind, 10> kAllHardAugKinds{
    HardAugKind::Rotate90, HardAugKind::Rotate180,     HardAugKind::Rotate270, HardAugKind::Permute4,
    HardAugKind::GaussianNoise, HardAugKind::CutOut,   HardAugKind::CutPaste,  HardAugKind::Sobel,
    HardAugKind::Blur,     HardAugKind::MixUp};

inline std::string to_string(HardAugKind kind) {
  switch (kind) {
    case HardAugKind::Rotate90: return "rotate90";
    case HardAugKind::Rotate180: return "rotate180";
    case HardAugKind::Rotate270: return "rotate270";
    case HardAugKind::Permute4: return "permute4";
    case HardAugKind::GaussianNoise: return "gaussian_noise";
    case HardAugKind::CutOut: return "cutout";
    case HardAugKind::CutPaste: return "cutpaste";
    case HardAugKind::Sobel: return "sobel";
    case HardAugKind::Blur: return "blur";
    case HardAugKind::MixUp: return "mixup";
  }
  return "unknown";
}

inline HardAugKind parse_hard_aug_kind(const std::string& name) {
  for (auto kind : kAllHardAugKinds) {
    if (to_string(kind) == name) return kind;
  }
  fail_usage("unknown hard augmentation '" + name + "'");
}

struct HardAugParams {
  double noise_sigma = 0.1;
  double cutout_area_min = 0.15;
  double cutout_area_max = 0.35;
  double cutpaste_area_min = 0.10;
  double cutpaste_area_max = 0.25;
  double blur_sigma = 1.0;
  double mixup_min = 0.4;
  double mixup_max = 0.6;
};

struct PixelRect {
  std::uint32_t y0, x0, h, w;
};

namespace detail {

/// Rectangle covering roughly `area_frac` of the image with log-uniform aspect in [1/2, 2].
inline PixelRect random_rect_size(const ImageSample& img, double area_frac, Rng& rng) {
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  const double target = area_frac * img.height * img.width;
  auto h = static_cast<std::uint32_t>(std::lround(std::sqrt(target / aspect)));
  h = std::clamp<std::uint32_t>(h, 1, img.height);
  auto w = static_cast<std::uint32_t>(std::lround(target / h));
  w = std::clamp<std::uint32_t>(w, 1, img.width);
  return {0, 0, h, w};
}

inline ImageSample rotate90_ccw(const ImageSample& img) {
  ImageSample out(img.channels, img.width, img.height);
  out.label = img.label;
  for (std::uint32_t c = 0; c < img.channels; ++c)
    for (std::uint32_t y = 0; y < out.height; ++y)
      for (std::uint32_t x = 0; x < out.width; ++x) out.at(c, y, x) = img.at(c, x, img.width - 1 - y);
  return out;
}

inline ImageSample permute_quadrants(const ImageSample& img, Rng& rng) {
  if (img.height % 2 != 0 || img.width % 2 != 0) fail_data("permute4: image dims must be even");
  std::array<int, 4> perm{0, 1, 2, 3};
  // Uniform over the 23 non-identity permutations.
  const auto index = 1 + rng.below(23);
  for (std::uint64_t i = 0; i < index; ++i) std::next_permutation(perm.begin(), perm.end());
  const std::uint32_t hh = img.height / 2, hw = img.width / 2;
  ImageSample out = img;
  for (int q = 0; q < 4; ++q) {
    const std::uint32_t dy = (q / 2) * hh, dx = (q % 2) * hw;
    const std::uint32_t sy = (perm[q] / 2) * hh, sx = (perm[q] % 2) * hw;
    for (std::uint32_t c = 0; c < img.channels; ++c)
      for (std::uint32_t y = 0; y < hh; ++y)
        for (std::uint32_t x = 0; x < hw; ++x) out.at(c, dy + y, dx + x) = img.at(c, sy + y, sx + x);
  }
  return out;
}

inline ImageSample sobel_magnitude(const ImageSample& img) {
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  ImageSample out(img.channels, img.height, img.width);
  out.label = img.label;
  std::vector<double> mag(img.size());
  double peak = 0.0;
  for (std::uint32_t c = 0; c < img.channels; ++c) {
    auto px = [&](int y, int x) -> double { return img.at(c, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                          (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
        const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                          (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
        const double m = std::sqrt(gx * gx + gy * gy);
        mag[(c * img.height + y) * img.width + x] = m;
        peak = std::max(peak, m);
      }
  }
  if (peak > 0.0) {
    for (std::size_t i = 0; i < mag.size(); ++i) out.pixels[i] = static_cast<float>(mag[i] / peak);
  }
  return out;
}

}  // namespace detail

/// Applies one hard augmentation. `partner` is required for (and only used by) MixUp.
inline ImageSample hard_augment(const ImageSample& img, HardAugKind kind, Rng rng,
                                const ImageSample* partner = nullptr, const HardAugParams& p = {}) {
  if (kind == HardAugKind::MixUp && partner == nullptr) fail_data("mixup requires a partner image");
  const bool rotation = kind == HardAugKind::Rotate90 || kind == HardAugKind::Rotate180 || kind == HardAugKind::Rotate270;
  if (rotation && img.height != img.width) fail_data(to_string(kind) + ": image must be square");

  switch (kind) {
    case HardAugKind::Rotate90: return detail::rotate90_ccw(img);
    case HardAugKind::Rotate180: return detail::rotate90_ccw(detail::rotate90_ccw(img));
    case HardAugKind::Rotate270: return detail::rotate90_ccw(detail::rotate90_ccw(detail::rotate90_ccw(img)));
    case HardAugKind::Permute4: return detail::permute_quadrants(img, rng);
    case HardAugKind::GaussianNoise: {
      ImageSample out = img;
      for (auto& v : out.pixels) v = static_cast<float>(v + p.noise_sigma * rng.normal());
      clamp01(out);
      return out;
    }
    case HardAugKind::CutOut: {
      auto r = detail::random_rect_size(img, rng.uniform(p.cutout_area_min, p.cutout_area_max), rng);
      r.y0 = static_cast<std::uint32_t>(rng.below(img.height - r.h + 1));
      r.x0 = static_cast<std::uint32_t>(rng.below(img.width - r.w + 1));
      ImageSample out = img;
      for (std::uint32_t c = 0; c < img.channels; ++c)
        for (std::uint32_t y = r.y0; y < r.y0 + r.h; ++y)
          for (std::uint32_t x = r.x0; x < r.x0 + r.w; ++x) out.at(c, y, x) = 0.0f;
      return out;
    }
    case HardAugKind::CutPaste: {
      auto r = detail::random_rect_size(img, rng.uniform(p.cutpaste_area_min, p.cutpaste_area_max), rng);
      const auto ny = img.height - r.h + 1, nx = img.width - r.w + 1;
      const auto sy = static_cast<std::uint32_t>(rng.below(ny)), sx = static_cast<std::uint32_t>(rng.below(nx));
      std::uint32_t dy = sy, dx = sx;
      if (std::uint64_t{ny} * nx > 1) {
        while (dy == sy && dx == sx) {
          dy = static_cast<std::uint32_t>(rng.below(ny));
          dx = static_cast<std::uint32_t>(rng.below(nx));
        }
      }
      ImageSample out = img;
      for (std::uint32_t c = 0; c < img.channels; ++c)
        for (std::uint32_t y = 0; y < r.h; ++y)
          for (std::uint32_t x = 0; x < r.w; ++x) out.at(c, dy + y, dx + x) = img.at(c, sy + y, sx + x);
      return out;
    }
    case HardAugKind::Sobel: return detail::sobel_magnitude(img);
    case HardAugKind::Blur: return gaussian_blur(img, p.blur_sigma, 1);
    case HardAugKind::MixUp: {
      if (!img.same_shape(*partner)) fail_data("mixup partner shape mismatch");
      const double beta = rng.uniform(p.mixup_min, p.mixup_max);
      ImageSample out = img;
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.pixels[i] = static_cast<float>(beta * img.pixels[i] + (1.0 - beta) * partner->pixels[i]);
      }
      clamp01(out);
      return out;
    }
  }
  fail_usage("hard_augment: unhandled kind");
}

}  // namespace unode
