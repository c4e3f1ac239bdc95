#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "unode/core/error.hpp"

namespace unode {

/// Histogram probabilities over shared bin edges, epsilon-smoothed so every bin is positive.
struct Density {
  std::vector<double> bin_edges;
  std::vector<double> probs;
};

/// `bins` equal-width bins spanning [lo, hi]; a degenerate range is widened by 0.5 each side.
inline std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins < 2) fail_usage("uniform_edges: need at least 2 bins");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  edges.back() = hi;
  return edges;
}

/// Coordinates outside the edge range are counted in the first or last bin.
inline Density density(std::span<const float> coords, std::span<const double> edges, double eps = 1e-6) {
  if (edges.size() < 3) fail_usage("density: need at least 2 bins");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) fail_usage("density: bin edges must be strictly increasing");
  }
  if (coords.empty()) fail_data("density: no coordinates");
  if (eps < 0.0) fail_usage("density: eps must be non-negative");
  const std::size_t bins = edges.size() - 1;
  std::vector<double> counts(bins, 0.0);
  for (float c : coords) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), static_cast<double>(c));
    const auto b = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    counts[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1))] += 1.0;
  }
  Density d;
  d.bin_edges.assign(edges.begin(), edges.end());
  d.probs.resize(bins);
  const double n = static_cast<double>(coords.size());
  const double denom = 1.0 + static_cast<double>(bins) * eps;
  for (std::size_t b = 0; b < bins; ++b) d.probs[b] = (counts[b] / n + eps) / denom;
  return d;
}

/// KL(p || q) in nats.
inline double kl_div(const Density& p, const Density& q) {
  if (p.bin_edges != q.bin_edges || p.probs.size() != q.probs.size()) fail_usage("kl_div: densities use different bins");
  double acc = 0.0;
  for (std::size_t b = 0; b < p.probs.size(); ++b) {
    if (p.probs[b] > 0.0) acc += p.probs[b] * std::log(p.probs[b] / q.probs[b]);
  }
  return acc;
}

/// Symmetrized KL: KL(p||q) + KL(q||p).
inline double j_div(const Density& p, const Density& q) { return kl_div(p, q) + kl_div(q, p); }

}  // namespace unode
