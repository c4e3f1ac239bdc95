#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "unode/core/error.hpp"

namespace unode {

/// Twice the Mann-Whitney U count: each (inlier, outlier) pair adds 2 if the inlier scores
/// higher and 1 on a tie. Kept integral so rank and pair-count forms agree exactly.
inline std::uint64_t auroc_doubled_count(std::span<const float> inlier, std::span<const float> outlier) {
  std::vector<float> out(outlier.begin(), outlier.end());
  std::sort(out.begin(), out.end());
  std::uint64_t count = 0;
  for (float s : inlier) {
    const auto lo = std::lower_bound(out.begin(), out.end(), s);
    const auto hi = std::upper_bound(lo, out.end(), s);
    count += 2 * static_cast<std::uint64_t>(lo - out.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return count;
}

/// P(inlier score > outlier score) + P(tie)/2; higher scores mean more inlier-like.
inline double auroc(std::span<const float> inlier, std::span<const float> outlier) {
  if (inlier.empty() || outlier.empty()) fail_data("auroc: both score lists must be nonempty");
  for (float s : inlier)
    if (s != s) fail_numeric("auroc: NaN score");
  for (float s : outlier)
    if (s != s) fail_numeric("auroc: NaN score");
  const double pairs = 2.0 * static_cast<double>(inlier.size()) * static_cast<double>(outlier.size());
  return static_cast<double>(auroc_doubled_count(inlier, outlier)) / pairs;
}

}  // namespace unode
