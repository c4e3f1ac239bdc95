#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "unode/core/optim.hpp"
#include "unode/objective/loss.hpp"

namespace unode {

struct TrainConfig {
  std::uint32_t batch_size = 32;
  double lambda_loss = 1.0;
  double temperature = 1.0;
  PairParams pairs;
  // Labeled mode: inlier labels map to head classes by position in this list.
  std::vector<std::uint32_t> class_ids;
  std::uint64_t seed = 0;
  // Halt after this many epochs (0 = full schedule) without changing the schedule.
  std::uint32_t stop_epoch = 0;
};

struct StepLog {
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

/// floor(N / B): the last incomplete batch of each epoch is dropped.
inline std::uint64_t steps_per_epoch(std::size_t n, std::uint32_t batch_size) {
  if (batch_size < 2) fail_usage("train: batch_size must be >= 2");
  const std::uint64_t s = n / batch_size;
  if (s == 0) fail_data("train: " + std::to_string(n) + " samples are fewer than one batch of " + std::to_string(batch_size));
  return s;
}

/// Sample order of one epoch; a pure function of (seed, epoch) so resumed runs replay it.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint32_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed, 0x53485546ull).fork(epoch);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

using StepCallback = std::function<void(const StepLog&)>;

/// Runs optimizer steps [start_step, total_epochs * steps_per_epoch). The schedule, batch order
/// and per-step randomness depend only on (seed, step), so a resumed run continues bit-identically.
inline std::vector<StepLog> train_model(Model<float>& model, OptimState<float>& optim, std::span<const ImageSample> data,
                                        const AugWeightTable& table, const TrainConfig& cfg, std::uint64_t start_step = 0,
                                        const StepCallback& on_step = {}) {
  const bool labeled = model.config().head == HeadKind::NClass;
  if (labeled && cfg.class_ids.size() != model.config().n_classes) {
    fail_usage("train: labeled mode needs one class id per head output");
  }
  const std::uint64_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const std::uint64_t total = spe * optim.config.total_epochs;
  if (start_step > total) fail_usage("train: start step beyond the schedule");
  const std::uint64_t end = cfg.stop_epoch ? std::min(total, spe * cfg.stop_epoch) : total;
  auto params = model.params();
  const Rng step_root(cfg.seed, 0x53544550ull);

  std::vector<StepLog> logs;
  std::vector<std::size_t> order;
  std::uint32_t order_epoch = ~0u;
  for (std::uint64_t step = start_step; step < end; ++step) {
    const auto epoch = static_cast<std::uint32_t>(step / spe);
    if (epoch != order_epoch) {
      order = epoch_order(data.size(), cfg.seed, epoch);
      order_epoch = epoch;
    }
    const std::size_t first = static_cast<std::size_t>(step % spe) * cfg.batch_size;
    std::vector<ImageSample> batch;
    std::vector<std::uint32_t> class_index;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const auto& img = data[order[first + k]];
      batch.push_back(img);
      if (labeled) {
        if (!img.label) fail_data("train: labeled mode needs labeled images");
        const auto it = std::find(cfg.class_ids.begin(), cfg.class_ids.end(), *img.label);
        if (it == cfg.class_ids.end()) fail_data("train: label " + std::to_string(*img.label) + " not in class list");
        class_index.push_back(static_cast<std::uint32_t>(it - cfg.class_ids.begin()));
      }
    }

    const auto cb = build_pairs(batch, table, step_root.fork(step), cfg.pairs);
    for (auto& p : params) p.zero_grad();
    const auto terms = unode_terms(model, cb, cfg.lambda_loss, cfg.temperature, class_index);
    if (!std::isfinite(terms.total.item())) fail_numeric("train: non-finite loss at step " + std::to_string(step));
    backward(terms.total);
    const double lr = lr_at(optim.config, step, spe);
    optim_step(optim, std::span<Tensor<float>>(params), lr);

    StepLog log{step, epoch, lr, terms.breakdown(cfg.lambda_loss)};
    if (on_step) on_step(log);
    logs.push_back(log);
  }
  return logs;
}

inline std::string loss_log_csv(std::span<const StepLog> logs) {
  std::string s = "step,epoch,lr,con,ce,total\n";
  for (const auto& l : logs) {
    s += std::to_string(l.step) + "," + std::to_string(l.epoch) + "," + format_double(l.lr) + "," +
         format_double(l.loss.con) + "," + format_double(l.loss.ce) + "," + format_double(l.loss.total) + "\n";
  }
  return s;
}

}  // namespace unode
