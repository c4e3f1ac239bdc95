#pragma once

#include <cmath>

#include "unode/augment/image.hpp"
#include "unode/core/rng.hpp"

namespace unode {

/// Positive-pair (semantics-preserving) augmentation family.
struct WeakAugParams {
  double crop_area_min = 0.6;
  double crop_area_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double brightness = 0.2;
};

/// Random resized crop, horizontal flip and additive brightness jitter, clamped to [0,1].
/// Always consumes the same number of draws from `rng`, whatever the parameters.
inline ImageSample weak_augment(const ImageSample& img, Rng rng, const WeakAugParams& p = {}) {
  if (img.height < 4 || img.width < 4) fail_data("weak_augment: image smaller than 4x4");
  const double area = rng.uniform(p.crop_area_min, p.crop_area_max);
  const double aspect = std::exp(rng.uniform(std::log(p.aspect_min), std::log(p.aspect_max)));
  const double crop_w = std::min<double>(img.width, img.width * std::sqrt(area * aspect));
  const double crop_h = std::min<double>(img.height, img.height * std::sqrt(area / aspect));
  const double x0 = rng.uniform() * (img.width - crop_w);
  const double y0 = rng.uniform() * (img.height - crop_h);
  const bool flip = rng.bernoulli(p.flip_prob);
  const double shift = rng.uniform(-p.brightness, p.brightness);

  ImageSample out(img.channels, img.height, img.width);
  out.label = img.label;
  const double sx = crop_w / img.width, sy = crop_h / img.height;
  for (std::uint32_t c = 0; c < img.channels; ++c) {
    for (std::uint32_t y = 0; y < img.height; ++y) {
      const double src_y = y0 + (y + 0.5) * sy - 0.5;
      for (std::uint32_t x = 0; x < img.width; ++x) {
        const std::uint32_t ox = flip ? img.width - 1 - x : x;
        const double src_x = x0 + (x + 0.5) * sx - 0.5;
        out.at(c, y, ox) = static_cast<float>(sample_bilinear(img, c, src_y, src_x) + shift);
      }
    }
  }
  clamp01(out);
  return out;
}

}  // namespace unode
