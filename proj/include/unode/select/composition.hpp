#pragma once

#include <span>
#include <vector>

#include "unode/augment/hard.hpp"
#include "unode/select/weights.hpp"

namespace unode {

/// Ordered hard augmentations; kinds[0] is the outermost map, so kinds.back() is applied first.
struct Composition {
  std::vector<HardAugKind> kinds;

  friend bool operator==(const Composition&, const Composition&) = default;
};

/// Draws r ~ U{1..r_max}, then r distinct kinds sequentially, each proportional to the
/// renormalized weights of the kinds not yet drawn (uniform if those weights are all zero).
inline Composition sample_composition(const AugWeightTable& table, Rng& rng, std::uint32_t r_max) {
  const std::size_t m = table.size();
  if (m == 0) fail_usage("sample_composition: empty weight table");
  if (r_max < 1 || r_max > m) fail_usage("sample_composition: r_max must lie in 1..M");
  const auto r = 1 + static_cast<std::size_t>(rng.below(r_max));
  std::vector<std::size_t> remaining(m);
  for (std::size_t k = 0; k < m; ++k) remaining[k] = k;
  Composition comp;
  for (std::size_t step = 0; step < r; ++step) {
    double total = 0.0;
    for (auto k : remaining) total += table.weights[k];
    std::size_t pick = remaining.size() - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        const double w = table.weights[remaining[i]];
        if (w > 0.0 && u < w) {
          pick = i;
          break;
        }
        u -= w;
      }
      // Guard against rounding leaving u just past the last positive weight.
      while (table.weights[remaining[pick]] <= 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<std::size_t>(rng.below(remaining.size()));
    }
    comp.kinds.push_back(table.kinds[remaining[pick]]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return comp;
}

/// Applies a composition to every sample, innermost map first. MixUp partners are drawn
/// uniformly from the other samples of the current (partially transformed) batch.
inline std::vector<ImageSample> apply_composition(std::span<const ImageSample> batch, const Composition& comp, Rng rng,
                                                  const HardAugParams& params = {}) {
  if (batch.empty()) fail_data("apply_composition: empty batch");
  std::vector<ImageSample> cur(batch.begin(), batch.end());
  for (std::size_t stage = comp.kinds.size(); stage-- > 0;) {
    const HardAugKind kind = comp.kinds[stage];
    const Rng stage_rng = rng.fork(stage);
    std::vector<ImageSample> next;
    next.reserve(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      Rng sample_rng = stage_rng.fork(i);
      const ImageSample* partner = nullptr;
      if (kind == HardAugKind::MixUp) {
        if (cur.size() < 2) fail_data("mixup needs a batch of at least 2 samples");
        auto j = static_cast<std::size_t>(sample_rng.below(cur.size() - 1));
        if (j >= i) ++j;
        partner = &cur[j];
      }
      next.push_back(hard_augment(cur[i], kind, sample_rng.fork(1), partner, params));
    }
    cur = std::move(next);
  }
  return cur;
}

struct GammaBatch {
  std::vector<ImageSample> images;
  Composition composition;
};

/// One composition per call, shared by the whole batch.
inline GammaBatch gamma_apply(std::span<const ImageSample> batch, const AugWeightTable& table, Rng rng,
                              std::uint32_t r_max, const HardAugParams& params = {}) {
  if (batch.empty()) fail_data("gamma_apply: empty batch");
  Rng comp_rng = rng.fork(0);
  GammaBatch out;
  out.composition = sample_composition(table, comp_rng, r_max);
  out.images = apply_composition(batch, out.composition, rng.fork(1), params);
  return out;
}

}  // namespace unode
