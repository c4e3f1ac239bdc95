#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "unode/core/rng.hpp"
#include "unode/select/embedding.hpp"

namespace unode {

struct TsneParams {
  double perplexity = 30.0;
  std::uint32_t iters = 500;
  double learning_rate = 100.0;
  double early_exaggeration = 12.0;
  std::uint32_t exaggeration_iters = 100;
  std::uint32_t momentum_switch_iter = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::uint64_t seed = 0;
  // Record the exact KL objective every iteration (adds one log per pair per iteration).
  bool record_kl = false;
};

struct TsneResult {
  std::vector<float> coords;
  std::vector<double> kl_trace;
  double perplexity_used = 0.0;
  double learning_rate_used = 0.0;
};

namespace detail {

/// Row-conditional Gaussian affinities whose entropy matches log(perplexity).
inline std::vector<double> tsne_conditional_affinities(const std::vector<double>& sqdist, std::size_t n,
                                                       double perplexity) {
  constexpr double kTol = 1e-5;
  constexpr int kMaxIter = 50;
  const double target = std::log(perplexity);
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* d = sqdist.data() + i * n;
    double* row = p.data() + i * n;
    double beta = 1.0, lo = -std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::max();
    for (int it = 0; it < kMaxIter; ++it) {
      double z = 0.0;
      // Shift by the smallest off-diagonal distance so exp never underflows the whole row.
      double dmin = std::numeric_limits<double>::max();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d[j]);
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d[j] - dmin));
        z += row[j];
      }
      double h = 0.0;
      for (std::size_t j = 0; j < n; ++j) h += beta * (d[j] - dmin) * row[j];
      h = h / z + std::log(z);
      for (std::size_t j = 0; j < n; ++j) row[j] /= z;
      const double diff = h - target;
      if (std::abs(diff) < kTol) break;
      if (diff > 0) {
        lo = beta;
        beta = hi == std::numeric_limits<double>::max() ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = lo == -std::numeric_limits<double>::max() ? beta / 2.0 : (beta + lo) / 2.0;
      }
    }
  }
  return p;
}

}  // namespace detail

/// Exact O(n^2) t-SNE to one dimension with a Student-t (one degree of freedom) kernel.
inline TsneResult tsne1(const EmbeddingMatrix& x, const TsneParams& params) {
  validate(x);
  const std::size_t n = x.n, dim = x.d;
  if (n < 8) fail_data("tsne1: need at least 8 points, got " + std::to_string(n));
  if (params.iters == 0) fail_usage("tsne1: iters must be positive");
  double perplexity = params.perplexity;
  if (perplexity > (n - 1) / 3.0) perplexity = (n - 1) / 3.0;
  if (!(perplexity > 1.0)) fail_data("tsne1: perplexity infeasible for n=" + std::to_string(n));

  // Center and scale to max |x| = 1 before computing distances.
  std::vector<double> data(x.values.begin(), x.values.end());
  for (std::size_t k = 0; k < dim; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += data[i * dim + k];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) data[i * dim + k] -= m;
  }
  double maxabs = 0.0;
  for (double v : data) maxabs = std::max(maxabs, std::abs(v));
  if (maxabs > 0.0)
    for (auto& v : data) v /= maxabs;

  std::vector<double> sqdist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = data[i * dim + k] - data[j * dim + k];
        s += diff * diff;
      }
      sqdist[i * n + j] = sqdist[j * n + i] = s;
    }

  auto p = detail::tsne_conditional_affinities(sqdist, n, perplexity);
  sqdist.clear();
  sqdist.shrink_to_fit();
  double psum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = p[i * n + j] + p[j * n + i];
      p[i * n + j] = p[j * n + i] = v;
      psum += 2.0 * v;
    }
  double plogp = 0.0;
  for (auto& v : p) {
    v = std::max(v / psum, std::numeric_limits<double>::min());
    plogp += v * std::log(v);
  }

  // Step sizes above n / early_exaggeration diverge on small inputs; cap like perplexity.
  const double lr = std::min(params.learning_rate, static_cast<double>(n) / std::max(params.early_exaggeration, 1.0));

  Rng rng(params.seed, 0x7453'4E45ull);
  std::vector<double> y(n), update(n, 0.0), gains(n, 1.0), grad(n);
  for (auto& v : y) v = 1e-4 * rng.normal();

  TsneResult result;
  result.perplexity_used = perplexity;
  result.learning_rate_used = lr;
  std::vector<double> w(n * n);
  for (std::uint32_t iter = 0; iter < params.iters; ++iter) {
    const double exaggeration = iter < params.exaggeration_iters ? params.early_exaggeration : 1.0;
    const double momentum = iter < params.momentum_switch_iter ? params.initial_momentum : params.final_momentum;

    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double diff = y[i] - y[j];
        const double v = 1.0 / (1.0 + diff * diff);
        w[i * n + j] = w[j * n + i] = v;
        wsum += 2.0 * v;
      }
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double wij = w[i * n + j];
        const double f = 4.0 * (exaggeration * p[i * n + j] - wij / wsum) * wij * (y[i] - y[j]);
        grad[i] += f;
        grad[j] -= f;
      }

    if (params.record_kl) {
      // KL(P||Q) with q_ij = w_ij / sum(w); the diagonal carries no mass in either.
      double plogq = 0.0, pdiag = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        pdiag += p[i * n + i];
        for (std::size_t j = i + 1; j < n; ++j) plogq += 2.0 * p[i * n + j] * std::log(w[i * n + j]);
      }
      result.kl_trace.push_back(plogp - (plogq - (1.0 - pdiag) * std::log(wsum)));
    }

    for (std::size_t i = 0; i < n; ++i) {
      const bool same_sign = (grad[i] > 0.0) == (update[i] > 0.0);
      gains[i] = std::max(same_sign ? gains[i] * 0.8 : gains[i] + 0.2, 0.01);
      update[i] = momentum * update[i] - lr * gains[i] * grad[i];
      y[i] += update[i];
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    for (auto& v : y) v -= mean;
  }

  result.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.coords[i] = static_cast<float>(y[i]);
  return result;
}

}  // namespace unode
