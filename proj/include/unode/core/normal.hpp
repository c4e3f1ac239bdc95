#pragma once

#include <cmath>
#include <numbers>

#include "unode/core/error.hpp"

namespace unode {

/// Standard normal CDF, evaluated in double through erfc so both tails keep full
/// relative precision.
inline double std_normal_cdf(double x) {
  if (std::isnan(x)) fail_numeric("std_normal_cdf: NaN input");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double std_normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace unode
