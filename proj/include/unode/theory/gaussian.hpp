#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "unode/core/normal.hpp"
#include "unode/core/rng.hpp"
#include "unode/select/weights.hpp"

namespace unode {

// Two-class Gaussian model: inliers x ~ N(0, I) with y = -1, true outliers x ~ N(a, I) with
// y = +1. The classifier sign(a'^T (x - a'/2)) is fit to auxiliary outliers at mean a'.
// Error rates are the SUM of the two class-conditional error probabilities, so they lie in [0, 2].

struct GaussianSetup {
  std::vector<double> a;
  std::vector<double> a_prime;
  double eps = 0.0;
};

namespace detail {

inline double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double check_setup(const GaussianSetup& s) {
  if (s.a.size() != s.a_prime.size()) fail_usage("gaussian setup: a and a' differ in dimension");
  if (s.a.empty()) fail_usage("gaussian setup: empty mean vectors");
  if (!(s.eps >= 0.0)) fail_usage("gaussian setup: eps must be >= 0");
  const double np = std::sqrt(dot(s.a_prime, s.a_prime));
  if (!(np > 0.0)) fail_usage("gaussian setup: a' must be nonzero");
  return np;
}

}  // namespace detail

/// Worst-case error under perturbation -y*eps*a'/|a'|:
///   1 - Phi(|a'|/2 - eps) + 1 - Phi(a^T a'/|a'| - |a'|/2 - eps).
inline double adv_error(const GaussianSetup& s) {
  const double np = detail::check_setup(s);
  const double proj = detail::dot(s.a, s.a_prime) / np;
  return (1.0 - std_normal_cdf(np / 2.0 - s.eps)) + (1.0 - std_normal_cdf(proj - np / 2.0 - s.eps));
}

/// The same error written through the mean shift delta = a' - a.
inline double adv_error_delta_form(const GaussianSetup& s) {
  const double np = detail::check_setup(s);
  std::vector<double> delta(s.a.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = s.a_prime[i] - s.a[i];
  const double shift = detail::dot(delta, s.a_prime) / np;
  return (1.0 - std_normal_cdf(np / 2.0 - s.eps)) + (1.0 - std_normal_cdf(np / 2.0 - shift - s.eps));
}

/// Error of the aligned case a' = (1 + 2d/|a|) a, the smallest over all directions of a'.
inline double lower_bound_error(double a_norm, double d, double eps) {
  if (!(a_norm > 0.0)) fail_usage("lower_bound_error: a_norm must be > 0");
  if (!(d >= 0.0)) fail_usage("lower_bound_error: d must be >= 0");
  if (!(eps >= 0.0)) fail_usage("lower_bound_error: eps must be >= 0");
  return (1.0 - std_normal_cdf(a_norm / 2.0 + d - eps)) + (1.0 - std_normal_cdf(a_norm / 2.0 - d - eps));
}

struct ErrorReport {
  double analytic = 0.0;
  double mc_estimate = 0.0;
  std::uint64_t mc_samples = 0;  // per class
  double ci_halfwidth = 0.0;

  bool agrees() const { return std::abs(mc_estimate - analytic) <= ci_halfwidth; }
};

/// Samples n_samples points per class, applies the worst-case perturbation and counts sign-rule
/// errors. The 3-sigma half-width uses (k + 1/2)/(n + 1) per class so it never collapses to 0.
inline ErrorReport mc_adv_error(const GaussianSetup& s, std::uint64_t n_samples, Rng rng) {
  const double np = detail::check_setup(s);
  if (n_samples < 10000) fail_usage("mc_adv_error: need at least 1e4 samples per class");
  const std::size_t dim = s.a.size();
  std::vector<double> u(dim);
  for (std::size_t i = 0; i < dim; ++i) u[i] = s.a_prime[i] / np;

  std::uint64_t errors[2] = {0, 0};
  for (int cls = 0; cls < 2; ++cls) {
    const double y = cls == 0 ? -1.0 : 1.0;
    Rng r = rng.fork(static_cast<std::uint64_t>(cls));
    std::vector<double> x(dim);
    for (std::uint64_t n = 0; n < n_samples; ++n) {
      double score = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double mean = cls == 0 ? 0.0 : s.a[i];
        const double xi = r.normal() + mean - y * s.eps * u[i];
        score += s.a_prime[i] * (xi - s.a_prime[i] / 2.0);
      }
      const double pred = score >= 0.0 ? 1.0 : -1.0;
      if (pred != y) ++errors[cls];
    }
  }
  ErrorReport rep;
  rep.analytic = adv_error(s);
  rep.mc_samples = n_samples;
  const double n = static_cast<double>(n_samples);
  double var = 0.0;
  for (auto k : errors) {
    rep.mc_estimate += static_cast<double>(k) / n;
    const double p = (static_cast<double>(k) + 0.5) / (n + 1.0);
    var += p * (1.0 - p) / n;
  }
  rep.ci_halfwidth = 3.0 * std::sqrt(var);
  return rep;
}

/// Aligned setup in `dim` dimensions with |a| = a_norm and |a'| = a_norm + 2d.
inline GaussianSetup aligned_setup(double a_norm, double d, double eps, std::size_t dim = 2) {
  GaussianSetup s;
  s.a.assign(dim, 0.0);
  s.a_prime.assign(dim, 0.0);
  s.a[0] = a_norm;
  s.a_prime[0] = a_norm + 2.0 * d;
  s.eps = eps;
  return s;
}

/// Random setup: dimension in [2, 16], |a| in [1, 4], |a| <= |a'| <= 6 in a random direction
/// at most 60 degrees from a, eps in [0, |a|/2).
inline GaussianSetup random_setup(Rng& rng) {
  const auto dim = static_cast<std::size_t>(2 + rng.below(15));
  auto unit = [&] {
    std::vector<double> v(dim);
    double n = 0.0;
    while (n < 1e-6) {
      n = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        n += x * x;
      }
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
  };
  GaussianSetup s;
  const double a_norm = rng.uniform(1.0, 4.0);
  const double ap_norm = rng.uniform(a_norm, 6.0);
  const auto ua = unit();
  // Tilt a' away from a by a random angle within 60 degrees.
  auto w = unit();
  double proj = detail::dot(w, ua);
  double wn = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    w[i] -= proj * ua[i];
    wn += w[i] * w[i];
  }
  wn = std::sqrt(wn);
  const double theta = rng.uniform(0.0, std::numbers::pi / 3.0);
  s.a.resize(dim);
  s.a_prime.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    s.a[i] = a_norm * ua[i];
    const double dir = std::cos(theta) * ua[i] + (wn > 0.0 ? std::sin(theta) * w[i] / wn : 0.0);
    s.a_prime[i] = ap_norm * dir;
  }
  s.eps = rng.uniform(0.0, a_norm / 2.0);
  return s;
}

struct SweepRow {
  double d = 0.0;
  double eps = 0.0;
  ErrorReport report;
};

/// One aligned setup per d; analytic and Monte Carlo errors side by side.
inline std::vector<SweepRow> sweep_d(double a_norm, double eps, const std::vector<double>& d_grid,
                                     std::uint64_t n_samples, Rng rng) {
  if (d_grid.empty()) fail_usage("sweep_d: empty d grid");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < d_grid.size(); ++i) {
    const auto setup = aligned_setup(a_norm, d_grid[i], eps);
    rows.push_back({d_grid[i], eps, mc_adv_error(setup, n_samples, rng.fork(i))});
  }
  return rows;
}

/// d,eps,analytic,mc,ci followed by the same errors halved into [0, 1].
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "d,eps,analytic,mc,ci,analytic_half,mc_half,ci_half\n";
  for (const auto& r : rows) {
    s += format_double(r.d) + "," + format_double(r.eps) + "," + format_double(r.report.analytic) + "," +
         format_double(r.report.mc_estimate) + "," + format_double(r.report.ci_halfwidth) + "," +
         format_double(r.report.analytic / 2) + "," + format_double(r.report.mc_estimate / 2) + "," +
         format_double(r.report.ci_halfwidth / 2) + "\n";
  }
  return s;
}

}  // namespace unode
