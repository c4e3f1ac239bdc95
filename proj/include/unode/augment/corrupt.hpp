#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "unode/augment/image.hpp"
#include "unode/core/rng.hpp"

namespace unode {

/// Test-time distortion suite; severity 1..5.
enum class CorruptionKind { GaussianNoise, ShotNoise, ImpulseNoise, Contrast, Brightness, Blur, SmallRotate, Translate };

inline constexpr std::array<CorruptionKind, 8> kAllCorruptionKinds{
    CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise,
    CorruptionKind::Contrast,      CorruptionKind::Brightness, CorruptionKind::Blur,
    CorruptionKind::SmallRotate,   CorruptionKind::Translate};

inline std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Blur: return "blur";
    case CorruptionKind::SmallRotate: return "small_rotate";
    case CorruptionKind::Translate: return "translate";
  }
  return "unknown";
}

inline CorruptionKind parse_corruption_kind(const std::string& name) {
  for (auto kind : kAllCorruptionKinds) {
    if (to_string(kind) == name) return kind;
  }
  fail_usage("unknown corruption '" + name + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  // 0 is accepted only by the evaluation protocol as a no-op shortcut.
  std::uint32_t severity = 1;

  std::string tag() const { return to_string(kind) + ":" + std::to_string(severity); }
};

namespace detail {

inline std::uint32_t poisson_knuth(double lambda, Rng& rng) {
  const double limit = std::exp(-lambda);
  std::uint32_t k = 0;
  double prod = rng.uniform();
  while (prod > limit) {
    ++k;
    prod *= rng.uniform();
  }
  return k;
}

}  // namespace detail

inline ImageSample corrupt(const ImageSample& img, const CorruptionSpec& spec, Rng rng) {
  if (spec.severity < 1 || spec.severity > 5) {
    fail_usage("corrupt: severity " + std::to_string(spec.severity) + " outside 1..5");
  }
  const std::size_t s = spec.severity - 1;
  ImageSample out = img;
  switch (spec.kind) {
    case CorruptionKind::GaussianNoise: {
      constexpr std::array<double, 5> sigma{0.04, 0.06, 0.08, 0.10, 0.12};
      for (auto& v : out.pixels) v = static_cast<float>(v + sigma[s] * rng.normal());
      break;
    }
    case CorruptionKind::ShotNoise: {
      constexpr std::array<double, 5> photons{60, 25, 12, 5, 3};
      for (auto& v : out.pixels) v = static_cast<float>(detail::poisson_knuth(v * photons[s], rng) / photons[s]);
      break;
    }
    case CorruptionKind::ImpulseNoise: {
      constexpr std::array<double, 5> frac{0.01, 0.02, 0.03, 0.05, 0.07};
      for (auto& v : out.pixels) {
        const double u = rng.uniform();
        if (u < frac[s]) v = u < 0.5 * frac[s] ? 0.0f : 1.0f;
      }
      break;
    }
    case CorruptionKind::Contrast: {
      constexpr std::array<double, 5> keep{0.75, 0.6, 0.45, 0.3, 0.15};
      for (std::uint32_t c = 0; c < img.channels; ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < img.plane(); ++i) m += img.pixels[c * img.plane() + i];
        m /= static_cast<double>(img.plane());
        for (std::size_t i = 0; i < img.plane(); ++i) {
          auto& v = out.pixels[c * img.plane() + i];
          v = static_cast<float>((v - m) * keep[s] + m);
        }
      }
      break;
    }
    case CorruptionKind::Brightness: {
      const float shift = 0.1f * static_cast<float>(spec.severity);
      for (auto& v : out.pixels) v += shift;
      break;
    }
    case CorruptionKind::Blur: {
      constexpr std::array<double, 5> sigma{0.5, 0.75, 1.0, 1.5, 2.0};
      out = gaussian_blur(img, sigma[s]);
      break;
    }
    case CorruptionKind::SmallRotate: {
      const double deg = 3.0 * static_cast<double>(spec.severity) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      const double th = deg * std::numbers::pi / 180.0;
      const double cs = std::cos(th), sn = std::sin(th);
      const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
      for (std::uint32_t c = 0; c < img.channels; ++c)
        for (std::uint32_t y = 0; y < img.height; ++y)
          for (std::uint32_t x = 0; x < img.width; ++x) {
            const double sx = cs * (x - cx) + sn * (y - cy) + cx;
            const double sy = -sn * (x - cx) + cs * (y - cy) + cy;
            const bool inside = sx >= -0.5 && sy >= -0.5 && sx <= img.width - 0.5 && sy <= img.height - 0.5;
            out.at(c, y, x) = inside ? sample_bilinear(img, c, sy, sx) : 0.0f;
          }
      break;
    }
    case CorruptionKind::Translate: {
      constexpr std::array<std::array<int, 2>, 8> dirs{{{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};
      const auto& d = dirs[rng.below(dirs.size())];
      const int dy = d[0] * static_cast<int>(spec.severity), dx = d[1] * static_cast<int>(spec.severity);
      const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
      for (std::uint32_t c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const int sy = y - dy, sx = x - dx;
            out.at(c, y, x) = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img.at(c, sy, sx) : 0.0f;
          }
      break;
    }
  }
  clamp01(out);
  return out;
}

}  // namespace unode
