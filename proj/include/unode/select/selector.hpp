#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "unode/augment/hard.hpp"
#include "unode/select/density.hpp"
#include "unode/select/embedding.hpp"
#include "unode/select/tsne.hpp"
#include "unode/select/weights.hpp"

namespace unode {

struct SelectionParams {
  TsneParams tsne;
  std::size_t bins = 64;
  double eps = 1e-6;
  double temperature = 1.0;
  HardAugParams hard;
};

struct SetScores {
  std::vector<double> j_scores;
  std::vector<float> joint_coords;
  Density inlier;
  std::vector<Density> augmented;
};

/// Projects the inlier set and every augmented set jointly to 1-D, histograms each part over
/// shared edges and scores each augmented set by its J-divergence from the inlier density.
inline SetScores score_embedding_sets(const EmbeddingMatrix& inlier, std::span<const EmbeddingMatrix> augmented,
                                      const SelectionParams& params) {
  if (augmented.empty()) fail_usage("score_embedding_sets: no augmented sets");
  std::vector<EmbeddingMatrix> parts{inlier};
  parts.insert(parts.end(), augmented.begin(), augmented.end());
  const EmbeddingMatrix joint = concat(std::span<const EmbeddingMatrix>(parts));

  SetScores out;
  out.joint_coords = tsne1(joint, params.tsne).coords;
  const auto [lo, hi] = std::minmax_element(out.joint_coords.begin(), out.joint_coords.end());
  const auto edges = uniform_edges(*lo, *hi, params.bins);

  std::size_t offset = 0;
  auto part_density = [&](std::size_t rows) {
    Density d = density(std::span<const float>(out.joint_coords.data() + offset, rows), edges, params.eps);
    offset += rows;
    return d;
  };
  out.inlier = part_density(inlier.n);
  for (const auto& a : augmented) {
    out.augmented.push_back(part_density(a.n));
    out.j_scores.push_back(j_div(out.inlier, out.augmented.back()));
  }
  return out;
}

/// s_k applied to every image; MixUp partners come from the same set.
inline std::vector<ImageSample> augment_set(std::span<const ImageSample> images, HardAugKind kind, Rng rng,
                                            const HardAugParams& params = {}) {
  std::vector<ImageSample> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    Rng r = rng.fork(i);
    const ImageSample* partner = nullptr;
    if (kind == HardAugKind::MixUp) {
      if (images.size() < 2) fail_data("mixup needs at least 2 images");
      auto j = static_cast<std::size_t>(r.below(images.size() - 1));
      if (j >= i) ++j;
      partner = &images[j];
    }
    out.push_back(hard_augment(images[i], kind, r.fork(1), partner, params));
  }
  return out;
}

struct SelectionResult {
  AugWeightTable table;
  SetScores scores;
};

/// Full selector: embed inliers and each augmented copy, score, softmax-weight.
inline SelectionResult select_augmentations(std::span<const ImageSample> images, std::vector<HardAugKind> kinds,
                                            const FeatureExtractor& extractor, const SelectionParams& params, Rng rng) {
  if (images.empty()) fail_data("select_augmentations: no inlier images");
  if (kinds.empty()) fail_usage("select_augmentations: empty augmentation list");
  const EmbeddingMatrix inlier = embed(images, extractor);
  std::vector<EmbeddingMatrix> augmented;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const auto set = augment_set(images, kinds[k], rng.fork(static_cast<std::uint64_t>(kinds[k])), params.hard);
    augmented.push_back(embed(set, extractor));
  }
  SelectionResult result;
  result.scores = score_embedding_sets(inlier, augmented, params);
  result.table = aug_weights(std::move(kinds), result.scores.j_scores, params.temperature);
  return result;
}

}  // namespace unode
