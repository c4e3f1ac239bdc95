#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "unode/augment/image.hpp"
#include "unode/core/rng.hpp"

namespace unode {

// Desk-scale stand-ins for benchmark classes. Crosses and Squares exist to serve as
// disjoint outlier sets in the multi-class protocol.
enum class SynthClass : std::uint32_t { OrientedBars = 0, Rings = 1, Blobs = 2, Checker = 3, Crosses = 4, Squares = 5 };

inline constexpr std::array<SynthClass, 6> kAllSynthClasses{SynthClass::OrientedBars, SynthClass::Rings,
                                                            SynthClass::Blobs,        SynthClass::Checker,
                                                            SynthClass::Crosses,      SynthClass::Squares};

inline std::string to_string(SynthClass c) {
  switch (c) {
    case SynthClass::OrientedBars: return "bars";
    case SynthClass::Rings: return "rings";
    case SynthClass::Blobs: return "blobs";
    case SynthClass::Checker: return "checker";
    case SynthClass::Crosses: return "crosses";
    case SynthClass::Squares: return "squares";
  }
  return "unknown";
}

inline SynthClass parse_synth_class(const std::string& name) {
  for (auto c : kAllSynthClasses)
    if (to_string(c) == name) return c;
  fail_usage("unknown synthetic class '" + name + "'");
}

struct SynthSpec {
  std::vector<SynthClass> classes{SynthClass::OrientedBars, SynthClass::Rings, SynthClass::Blobs, SynthClass::Checker};
  std::uint32_t channels = 1;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  std::uint32_t n_per_class = 500;
  std::uint64_t seed = 0;
};

namespace detail {

inline double coverage(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

inline void paint(ImageSample& img, double fg, double bg, auto&& cover) {
  for (std::uint32_t y = 0; y < img.height; ++y)
    for (std::uint32_t x = 0; x < img.width; ++x) {
      const double v = bg + (fg - bg) * cover(y, x);
      for (std::uint32_t c = 0; c < img.channels; ++c) img.at(c, y, x) = static_cast<float>(v);
    }
}

inline ImageSample synth_one(SynthClass cls, const SynthSpec& spec, Rng rng) {
  ImageSample img(spec.channels, spec.height, spec.width);
  const double cy = (spec.height - 1) / 2.0, cx = (spec.width - 1) / 2.0;
  const double scale = std::min(spec.height, spec.width) / 16.0;
  const double fg = rng.uniform(0.6, 1.0);
  const double bg = rng.uniform(0.0, 0.2);
  switch (cls) {
    case SynthClass::OrientedBars: {
      // Near-horizontal bar: rotation by 90 degrees leaves the class.
      const double th = rng.uniform(-20.0, 20.0) * std::numbers::pi / 180.0;
      const double ux = std::cos(th), uy = std::sin(th);
      const double off = rng.uniform(-3.0, 3.0) * scale;
      const double half_t = rng.uniform(1.0, 2.0) * scale;
      const double half_l = rng.uniform(5.0, 7.5) * scale;
      const double px = cx - uy * off, py = cy + ux * off;
      paint(img, fg, bg, [&](double y, double x) {
        const double along = std::abs((x - px) * ux + (y - py) * uy);
        const double across = std::abs(-(x - px) * uy + (y - py) * ux);
        return coverage(across - half_t) * coverage(along - half_l);
      });
      break;
    }
    case SynthClass::Rings: {
      // Centered exactly on the pixel grid so every image is invariant to 90-degree rotation.
      const double r0 = rng.uniform(2.0, 6.5) * scale;
      const double half_t = rng.uniform(0.5, 1.0) * scale;
      paint(img, fg, bg, [&](double y, double x) {
        const double dy = y - cy, dx = x - cx;
        return coverage(std::abs(std::sqrt(dx * dx + dy * dy) - r0) - half_t);
      });
      break;
    }
    case SynthClass::Blobs: {
      const auto count = 1 + rng.below(3);
      std::vector<std::array<double, 3>> blobs;
      for (std::uint64_t b = 0; b < count; ++b) {
        blobs.push_back({rng.uniform(2.0, spec.height - 3.0), rng.uniform(2.0, spec.width - 3.0),
                         rng.uniform(1.2, 2.5) * scale});
      }
      paint(img, fg, bg, [&](double y, double x) {
        double v = 0.0;
        for (const auto& b : blobs) v += std::exp(-((y - b[0]) * (y - b[0]) + (x - b[1]) * (x - b[1])) / (2 * b[2] * b[2]));
        return std::min(v, 1.0);
      });
      break;
    }
    case SynthClass::Checker: {
      const auto cell = static_cast<std::uint32_t>(2 + rng.below(3));
      const auto oy = static_cast<std::uint32_t>(rng.below(cell)), ox = static_cast<std::uint32_t>(rng.below(cell));
      paint(img, fg, bg, [&](std::uint32_t y, std::uint32_t x) { return ((y + oy) / cell + (x + ox) / cell) % 2 == 0 ? 1.0 : 0.0; });
      break;
    }
    case SynthClass::Crosses: {
      const double py = rng.uniform(4.0, spec.height - 5.0), px = rng.uniform(4.0, spec.width - 5.0);
      const double arm = rng.uniform(2.5, 4.0) * scale, half_t = rng.uniform(0.5, 1.0) * scale;
      paint(img, fg, bg, [&](double y, double x) {
        const double dy = std::abs(y - py), dx = std::abs(x - px);
        const double h = coverage(dy - half_t) * coverage(dx - arm);
        const double v = coverage(dx - half_t) * coverage(dy - arm);
        return std::max(h, v);
      });
      break;
    }
    case SynthClass::Squares: {
      const double half = rng.uniform(2.5, 5.0) * scale;
      const double py = rng.uniform(half + 0.5, spec.height - 1.5 - half), px = rng.uniform(half + 0.5, spec.width - 1.5 - half);
      paint(img, fg, bg, [&](double y, double x) {
        const double d = std::max(std::abs(y - py), std::abs(x - px));
        return coverage(std::abs(d - half) - 0.5);
      });
      break;
    }
  }
  clamp01(img);
  img.label = static_cast<std::uint32_t>(cls);
  return img;
}

}  // namespace detail

/// n_per_class images per listed class, grouped by class, labeled with the class id.
inline std::vector<ImageSample> gen_synth(const SynthSpec& spec) {
  if (spec.height < 4 || spec.width < 4 || spec.channels == 0) fail_usage("gen_synth: image too small");
  std::vector<ImageSample> out;
  out.reserve(spec.classes.size() * spec.n_per_class);
  const Rng root(spec.seed, 0x53594E54ull);
  for (auto cls : spec.classes) {
    const Rng class_rng = root.fork(static_cast<std::uint64_t>(cls));
    for (std::uint32_t i = 0; i < spec.n_per_class; ++i) out.push_back(detail::synth_one(cls, spec, class_rng.fork(i)));
  }
  return out;
}

}  // namespace unode
