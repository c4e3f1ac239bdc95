#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "unode/core/tensor.hpp"

namespace unode {

enum class OptimKind { SgdMomentum, Lars };

inline std::string to_string(OptimKind kind) { return kind == OptimKind::Lars ? "lars" : "sgd_momentum"; }

inline OptimKind parse_optim_kind(const std::string& s) {
  if (s == "lars") return OptimKind::Lars;
  if (s == "sgd" || s == "sgd_momentum") return OptimKind::SgdMomentum;
  fail_usage("unknown optimizer '" + s + "'");
}

struct OptimConfig {
  OptimKind kind = OptimKind::Lars;
  double lr_peak = 1.0;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::uint32_t warmup_epochs = 10;
  std::uint32_t total_epochs = 30;
  // Multiplies the layer-wise trust ratio |w| / |g + wd*w|; 1 diverged at peak lr 1 on the desk task.
  double trust_coefficient = 0.003;
};

/// Optimizer hyper-parameters plus one momentum buffer per parameter tensor.
template <std::floating_point T = float>
struct OptimState {
  OptimConfig config;
  std::vector<std::vector<T>> momentum_buffers;

  OptimState() = default;
  explicit OptimState(OptimConfig cfg) : config(cfg) {}
};

/// Per-step schedule: linear ramp to lr_peak over the warmup steps, then half-cosine decay
/// to zero over the remaining steps.
inline double lr_at(const OptimConfig& cfg, std::uint64_t step, std::uint64_t steps_per_epoch) {
  const std::uint64_t total = std::uint64_t{cfg.total_epochs} * steps_per_epoch;
  if (steps_per_epoch == 0 || step >= total) {
    fail_usage("lr_at: step " + std::to_string(step) + " outside schedule of " + std::to_string(total) + " steps");
  }
  const std::uint64_t warmup = std::min<std::uint64_t>(std::uint64_t{cfg.warmup_epochs} * steps_per_epoch, total);
  if (step < warmup) {
    return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const std::uint64_t decay_steps = total - warmup;
  // t_frac runs 0 at the first post-warmup step to 1 at the final step.
  // A lone step with no warmup would otherwise get lr 0.
  if (decay_steps == 1) return warmup == 0 ? cfg.lr_peak : 0.0;
  const double t_frac = static_cast<double>(step - warmup) / static_cast<double>(decay_steps - 1);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t_frac));
}

template <std::floating_point T>
void optim_step(OptimState<T>& state, std::span<Tensor<T>> params, double lr) {
  if (state.momentum_buffers.empty()) {
    for (const auto& p : params) state.momentum_buffers.emplace_back(p.numel(), T{0});
  }
  if (state.momentum_buffers.size() != params.size()) fail_usage("optim_step: parameter list changed");
  const auto& cfg = state.config;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.has_grad()) fail_usage("optim_step: parameter " + std::to_string(k) + " has no gradient");
    auto& buf = state.momentum_buffers[k];
    if (buf.size() != p.numel()) fail_usage("optim_step: momentum buffer shape mismatch");
    auto w = p.mutable_data();
    auto g = p.grad();

    double ratio = 1.0;
    if (cfg.kind == OptimKind::Lars) {
      double wn = 0.0, un = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double u = static_cast<double>(g[i]) + cfg.weight_decay * w[i];
        wn += static_cast<double>(w[i]) * w[i];
        un += u * u;
      }
      wn = std::sqrt(wn);
      un = std::sqrt(un);
      if (wn > 0.0 && un > 0.0) ratio = cfg.trust_coefficient * wn / un;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double u = ratio * (static_cast<double>(g[i]) + cfg.weight_decay * w[i]);
      buf[i] = static_cast<T>(cfg.momentum * buf[i] + u);
      w[i] = static_cast<T>(w[i] - lr * buf[i]);
    }
  }
}

}  // namespace unode
