#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "unode/augment/weak.hpp"
#include "unode/network/model.hpp"
#include "unode/select/composition.hpp"

namespace unode {

/// Views of one training batch. Row layout of `views()`: anchors t(x_i) [0, B), positives
/// t'(x_i) [B, 2B), then the hard-augmented views t(G(x_j)) at 2B + 2j and t'(G(x_j)) at 2B + 2j + 1.
struct ContrastiveBatch {
  std::vector<ImageSample> anchors;
  std::vector<ImageSample> positives;
  std::vector<ImageSample> negatives;
  Composition composition;

  std::size_t size() const noexcept { return anchors.size(); }

  /// Indices into `negatives` usable against anchor i: both views of every x_j, j != i.
  std::vector<std::size_t> negatives_of(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j) {
      if (j == i) continue;
      out.push_back(2 * j);
      out.push_back(2 * j + 1);
    }
    return out;
  }

  std::vector<ImageSample> views() const {
    std::vector<ImageSample> all(anchors);
    all.insert(all.end(), positives.begin(), positives.end());
    all.insert(all.end(), negatives.begin(), negatives.end());
    return all;
  }
};

struct PairParams {
  // Longest composition drawn for G; 0 means every kind in the table.
  std::uint32_t r_max = 0;
  WeakAugParams weak;
  HardAugParams hard;
};

/// t and t' are independent weak augmentations; one composition G is drawn for the batch.
inline ContrastiveBatch build_pairs(std::span<const ImageSample> batch, const AugWeightTable& table, Rng rng,
                                    const PairParams& params = {}) {
  const std::size_t b = batch.size();
  if (b < 2) fail_usage("build_pairs: batch of " + std::to_string(b) + " has no negatives (need B >= 2)");
  ContrastiveBatch cb;
  const Rng ta = rng.fork(0), tb = rng.fork(1), tg = rng.fork(3), tg2 = rng.fork(4);
  for (std::size_t i = 0; i < b; ++i) {
    cb.anchors.push_back(weak_augment(batch[i], ta.fork(i), params.weak));
    cb.positives.push_back(weak_augment(batch[i], tb.fork(i), params.weak));
  }
  const auto r_max = params.r_max ? params.r_max : static_cast<std::uint32_t>(table.size());
  GammaBatch g = gamma_apply(batch, table, rng.fork(2), r_max, params.hard);
  cb.composition = std::move(g.composition);
  for (std::size_t j = 0; j < b; ++j) {
    cb.negatives.push_back(weak_augment(g.images[j], tg.fork(j), params.weak));
    cb.negatives.push_back(weak_augment(g.images[j], tg2.fork(j), params.weak));
  }
  return cb;
}

/// Single contrastive term on unit vectors:
///   -(1/|P|) log( sum_P e^{<z,p>/tau} / sum_{P u N} e^{<z,n>/tau} ).
inline double contrastive_term(std::span<const double> anchor, const std::vector<std::span<const double>>& positives,
                               const std::vector<std::span<const double>>& negatives, double tau = 1.0) {
  if (positives.empty()) fail_usage("contrastive_term: empty positive set");
  if (!(tau > 0.0)) fail_usage("contrastive_term: temperature must be positive");
  auto sim = [&](std::span<const double> v) {
    if (v.size() != anchor.size()) fail_usage("contrastive_term: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += anchor[k] * v[k];
    return s / tau;
  };
  std::vector<double> ps, ns;
  for (auto p : positives) ps.push_back(sim(p));
  for (auto n : negatives) ns.push_back(sim(n));
  double mx = ps[0];
  for (double s : ps) mx = std::max(mx, s);
  for (double s : ns) mx = std::max(mx, s);
  double zp = 0.0, zn = 0.0;
  for (double s : ps) zp += std::exp(s - mx);
  for (double s : ns) zn += std::exp(s - mx);
  return -(std::log(zp) - std::log(zp + zn)) / static_cast<double>(positives.size());
}

/// Masks for the batch contrastive loss over the similarity matrix of the 2B anchor/positive
/// rows against all 4B views; laid out as in ContrastiveBatch::views().
struct ContrastiveMasks {
  std::vector<std::uint8_t> positive;
  std::vector<std::uint8_t> valid;
};

inline ContrastiveMasks contrastive_masks(std::size_t b) {
  const std::size_t rows = 2 * b, cols = 4 * b;
  ContrastiveMasks m{std::vector<std::uint8_t>(rows * cols, 0), std::vector<std::uint8_t>(rows * cols, 0)};
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = r % b;
    const std::size_t partner = r < b ? b + i : i;
    m.positive[r * cols + partner] = 1;
    m.valid[r * cols + partner] = 1;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      m.valid[r * cols + 2 * b + 2 * j] = 1;
      m.valid[r * cols + 2 * b + 2 * j + 1] = 1;
    }
  }
  return m;
}

/// (1/B) sum_i [l(t_i, {t'_i}, N_i) + l(t'_i, {t_i}, N_i)] given unit embeddings of all 4B views.
template <std::floating_point T>
Tensor<T> batch_contrastive(const Tensor<T>& zhat, std::size_t b, double tau = 1.0) {
  if (zhat.rank() != 2 || zhat.dim(0) != 4 * b) fail_usage("batch_contrastive: expected 4B embedding rows");
  const auto m = contrastive_masks(b);
  const Tensor<T> sims = matmul_nt(slice_rows(zhat, 0, 2 * b), zhat);
  return masked_nce(sims, m.positive, m.valid, tau, 1.0 / static_cast<double>(b));
}

template <std::floating_point T>
Tensor<T> batch_contrastive(const ContrastiveBatch& cb, const Model<T>& model, double tau = 1.0) {
  return batch_contrastive(model.project(model.forward_features(cb.views())), cb.size(), tau);
}

/// Target rows for the classification head. Binary: inliers [1, 0], negatives [0, 1]
/// (column 0 is the inlier class). N-class: one-hot inlier labels, uniform rows for negatives.
inline std::vector<double> ce_targets(const ModelConfig& cfg, std::size_t n_in, std::size_t n_neg,
                                      std::span<const std::uint32_t> class_index = {}) {
  const std::size_t m = cfg.head_outputs();
  std::vector<double> t((n_in + n_neg) * m, 0.0);
  if (cfg.head == HeadKind::Binary) {
    if (!class_index.empty()) fail_usage("ce_loss: labels given to a binary head");
    for (std::size_t i = 0; i < n_in; ++i) t[i * m] = 1.0;
    for (std::size_t i = 0; i < n_neg; ++i) t[(n_in + i) * m + 1] = 1.0;
  } else {
    if (class_index.size() != n_in) fail_usage("ce_loss: n-class head needs one label per inlier");
    for (std::size_t i = 0; i < n_in; ++i) {
      if (class_index[i] >= m) fail_data("ce_loss: class index out of range");
      t[i * m + class_index[i]] = 1.0;
    }
    for (std::size_t i = 0; i < n_neg; ++i)
      for (std::size_t c = 0; c < m; ++c) t[(n_in + i) * m + c] = 1.0 / static_cast<double>(m);
  }
  return t;
}

/// Mean over the batch of the negated log-likelihood of inliers as class 1 and negatives as class 0.
template <std::floating_point T>
Tensor<T> ce_loss(const Model<T>& model, const Tensor<T>& inlier_features, const Tensor<T>& negative_features,
                  std::span<const std::uint32_t> class_index = {}) {
  const std::size_t b = inlier_features.dim(0);
  if (negative_features.dim(0) != b) fail_usage("ce_loss: inlier and negative batches differ in size");
  const auto targets = ce_targets(model.config(), b, b, class_index);
  const auto logits = model.head_logits(concat_rows<T>({inlier_features, negative_features}));
  return soft_cross_entropy(logits, targets, 1.0 / static_cast<double>(b));
}

template <std::floating_point T>
Tensor<T> ce_loss(const Model<T>& model, std::span<const ImageSample> inliers, std::span<const ImageSample> negatives,
                  std::span<const std::uint32_t> class_index = {}) {
  return ce_loss(model, model.forward_features(inliers), model.forward_features(negatives), class_index);
}

struct LossBreakdown {
  float con = 0.0f;
  float ce = 0.0f;
  float total = 0.0f;
  float lambda_loss = 1.0f;
};

template <std::floating_point T>
struct LossTerms {
  Tensor<T> con;
  Tensor<T> ce;
  Tensor<T> total;

  LossBreakdown breakdown(double lambda_loss) const {
    return {static_cast<float>(con.item()), static_cast<float>(ce.item()), static_cast<float>(total.item()),
            static_cast<float>(lambda_loss)};
  }
};

/// con + lambda * ce from one forward pass over all 4B views. The classification term uses
/// the anchors t(x_i) as inliers and t(G(x_i)) as negatives, so G(B) feeds both losses.
template <std::floating_point T>
LossTerms<T> unode_terms(const Model<T>& model, const ContrastiveBatch& cb, double lambda_loss, double tau = 1.0,
                         std::span<const std::uint32_t> class_index = {}) {
  const std::size_t b = cb.size();
  const Tensor<T> feats = model.forward_features(cb.views());
  LossTerms<T> out;
  out.con = batch_contrastive(model.project(feats), b, tau);
  std::vector<Tensor<T>> neg_rows;
  for (std::size_t j = 0; j < b; ++j) neg_rows.push_back(slice_rows(feats, 2 * b + 2 * j, 2 * b + 2 * j + 1));
  out.ce = ce_loss(model, slice_rows(feats, 0, b), concat_rows(neg_rows), class_index);
  out.total = add(out.con, scale(out.ce, static_cast<T>(lambda_loss)));
  return out;
}

template <std::floating_point T>
LossBreakdown unode_loss(const Model<T>& model, std::span<const ImageSample> batch, const AugWeightTable& table, Rng rng,
                         double lambda_loss = 1.0, double tau = 1.0, const PairParams& params = {}) {
  NoGradGuard guard;
  const auto cb = build_pairs(batch, table, rng, params);
  return unode_terms(model, cb, lambda_loss, tau).breakdown(lambda_loss);
}

}  // namespace unode
