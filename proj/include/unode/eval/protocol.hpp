#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unode/augment/corrupt.hpp"
#include "unode/eval/auroc.hpp"
#include "unode/eval/report.hpp"
#include "unode/eval/synth.hpp"
#include "unode/objective/train.hpp"
#include "unode/scoring/scores.hpp"
#include "unode/select/selector.hpp"

namespace unode {

/// Everything needed to go from training images to scores.
struct PipelineConfig {
  ModelConfig model;
  OptimConfig optim;
  TrainConfig train;
  SelectionParams selection;
  std::vector<HardAugKind> kinds{kAllHardAugKinds.begin(), kAllHardAugKinds.end()};
  // Inliers fed to the augmentation selector (t-SNE cost grows quadratically).
  std::uint32_t select_samples = 100;
  // Selector features: raw pixels, or the freshly initialized encoder.
  bool select_with_encoder = false;
  std::optional<AugWeightTable> fixed_table;
  std::uint64_t seed = 0;
};

struct TrainedPipeline {
  Model<float> model;
  AugWeightTable table;
  TrainBank bank;
  ScoreCalibration calibration;
  std::vector<StepLog> logs;
};

inline Model<float> init_model(const PipelineConfig& cfg) { return Model<float>(cfg.model, Rng(cfg.seed).fork(1).next_u64()); }

inline AugWeightTable pipeline_weights(std::span<const ImageSample> train, const PipelineConfig& cfg) {
  if (cfg.fixed_table) return *cfg.fixed_table;
  const auto subset = train.first(std::min<std::size_t>(train.size(), cfg.select_samples));
  const FeatureExtractor extractor = cfg.select_with_encoder ? encoder_extractor(init_model(cfg)) : flatten_extractor();
  SelectionParams sp = cfg.selection;
  sp.tsne.seed = Rng(cfg.seed).fork(2).next_u64();
  return select_augmentations(subset, cfg.kinds, extractor, sp, Rng(cfg.seed, 0x53454C45ull)).table;
}

/// Finishes a trained model: bank and calibration over the full training set.
inline void finalize_pipeline(TrainedPipeline& p, std::span<const ImageSample> train) {
  const auto inputs = score_inputs(p.model, train);
  p.bank = make_bank(inputs);
  p.calibration = calibrate(inputs);
}

inline TrainedPipeline fit_pipeline(std::span<const ImageSample> train, const PipelineConfig& cfg,
                                    const StepCallback& on_step = {}) {
  TrainedPipeline p;
  p.table = pipeline_weights(train, cfg);
  p.model = init_model(cfg);
  OptimState<float> optim(cfg.optim);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  p.logs = train_model(p.model, optim, train, p.table, tc, 0, on_step);
  finalize_pipeline(p, train);
  return p;
}

inline std::vector<ScoreRow> score_images(const TrainedPipeline& p, std::span<const ImageSample> images) {
  return score_all(score_inputs(p.model, images), p.bank, p.calibration);
}

struct ComponentAuroc {
  double combined = 0.0;
  double sim = 0.0;
  double bin = 0.0;
};

inline ComponentAuroc component_auroc(std::span<const ScoreRow> inliers, std::span<const ScoreRow> outliers) {
  auto pick = [](std::span<const ScoreRow> rows, float ScoreRow::*field) {
    std::vector<float> v;
    for (const auto& r : rows) v.push_back(r.*field);
    return v;
  };
  return {auroc(pick(inliers, &ScoreRow::combined), pick(outliers, &ScoreRow::combined)),
          auroc(pick(inliers, &ScoreRow::sim), pick(outliers, &ScoreRow::sim)),
          auroc(pick(inliers, &ScoreRow::bin), pick(outliers, &ScoreRow::bin))};
}

inline std::vector<ImageSample> with_label(std::span<const ImageSample> data, std::uint32_t label, bool keep) {
  std::vector<ImageSample> out;
  for (const auto& img : data) {
    if (!img.label) fail_data("protocol: image without label");
    if ((*img.label == label) == keep) out.push_back(img);
  }
  return out;
}

/// Per-class train/test split of a synthetic dataset: the first n_train images of each class train.
inline std::pair<std::vector<ImageSample>, std::vector<ImageSample>> synth_split(SynthSpec spec, std::uint32_t n_train,
                                                                                std::uint32_t n_test) {
  spec.n_per_class = n_train + n_test;
  const auto all = gen_synth(spec);
  std::pair<std::vector<ImageSample>, std::vector<ImageSample>> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i % spec.n_per_class < n_train ? out.first : out.second).push_back(all[i]);
  }
  return out;
}

struct OneClassResult {
  std::uint32_t class_id = 0;
  ComponentAuroc auroc;
  TrainedPipeline pipeline;
};

/// Trains on class_id only; held-out images of that class are inliers, every other class is an outlier.
inline OneClassResult oneclass_eval(std::span<const ImageSample> train, std::span<const ImageSample> test,
                                    std::uint32_t class_id, const PipelineConfig& cfg) {
  const auto inliers = with_label(train, class_id, true);
  if (inliers.size() < 2 * std::size_t{cfg.train.batch_size}) {
    fail_data("oneclass_eval: class " + std::to_string(class_id) + " has " + std::to_string(inliers.size()) +
              " training samples, fewer than two batches");
  }
  OneClassResult r;
  r.class_id = class_id;
  r.pipeline = fit_pipeline(inliers, cfg);
  const auto test_in = with_label(test, class_id, true);
  const auto test_out = with_label(test, class_id, false);
  r.auroc = component_auroc(score_images(r.pipeline, test_in), score_images(r.pipeline, test_out));
  return r;
}

inline EvalReport oneclass_protocol(std::span<const ImageSample> train, std::span<const ImageSample> test,
                                    std::span<const std::uint32_t> class_ids, const PipelineConfig& cfg,
                                    const std::vector<std::string>& names = {}) {
  EvalReport rep;
  rep.protocol = "one-class";
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    PipelineConfig c = cfg;
    c.seed = Rng(cfg.seed).fork(class_ids[i]).next_u64();
    const auto r = oneclass_eval(train, test, class_ids[i], c);
    rep.add(i < names.size() ? names[i] : std::to_string(class_ids[i]), r.auroc.combined);
  }
  return rep;
}

/// Severity 0 leaves the image untouched.
inline std::vector<ImageSample> corrupt_all(std::span<const ImageSample> images, const CorruptionSpec& spec, Rng rng) {
  if (spec.severity == 0) return {images.begin(), images.end()};
  std::vector<ImageSample> out;
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back(corrupt(images[i], spec, rng.fork(i)));
  return out;
}

/// AUROC per corruption; inliers and outliers of the test set are both corrupted.
inline std::vector<double> corrupted_eval(const TrainedPipeline& p, std::span<const ImageSample> test,
                                          std::uint32_t class_id, std::span<const CorruptionSpec> corruptions,
                                          std::uint64_t seed) {
  const auto test_in = with_label(test, class_id, true);
  const auto test_out = with_label(test, class_id, false);
  const Rng root(seed, 0x434F5252ull);
  std::vector<double> out;
  for (std::size_t k = 0; k < corruptions.size(); ++k) {
    const Rng r = root.fork(k);
    const auto in = corrupt_all(test_in, corruptions[k], r.fork(0));
    const auto ood = corrupt_all(test_out, corruptions[k], r.fork(1));
    out.push_back(component_auroc(score_images(p, in), score_images(p, ood)).combined);
  }
  return out;
}

inline GridReport corrupted_protocol(std::span<const ImageSample> train, std::span<const ImageSample> test,
                                     std::span<const std::uint32_t> class_ids,
                                     std::span<const CorruptionSpec> corruptions, const PipelineConfig& cfg,
                                     const std::vector<std::string>& names = {}) {
  GridReport g;
  for (const auto& c : corruptions) g.corruptions.push_back(c.tag());
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    PipelineConfig c = cfg;
    c.seed = Rng(cfg.seed).fork(class_ids[i]).next_u64();
    const auto r = oneclass_eval(train, test, class_ids[i], c);
    g.classes.push_back(i < names.size() ? names[i] : std::to_string(class_ids[i]));
    g.auroc.push_back(corrupted_eval(r.pipeline, test, class_ids[i], corruptions, c.seed));
  }
  return g;
}

enum class MulticlassMode { Unlabeled, Labeled };

inline std::string to_string(MulticlassMode m) { return m == MulticlassMode::Unlabeled ? "unlabeled" : "labeled"; }

struct NamedSet {
  std::string name;
  std::vector<ImageSample> images;
};

/// Trains on every inlier class together and scores each external set against the inlier test split.
/// Unlabeled mode strips labels before training; labeled mode trains an n-class head.
inline EvalReport multiclass_eval(std::span<const ImageSample> in_train, std::span<const ImageSample> in_test,
                                  std::span<const NamedSet> out_sets, MulticlassMode mode, PipelineConfig cfg) {
  std::vector<ImageSample> train(in_train.begin(), in_train.end());
  if (mode == MulticlassMode::Unlabeled) {
    for (auto& img : train) img.label.reset();
    cfg.model.head = HeadKind::Binary;
    cfg.train.class_ids.clear();
  } else {
    std::set<std::uint32_t> ids;
    for (const auto& img : train) {
      if (!img.label) fail_data("multiclass_eval: labeled mode needs labels on every training image");
      ids.insert(*img.label);
    }
    if (ids.size() < 2) fail_data("multiclass_eval: labeled mode needs at least 2 classes");
    cfg.model.head = HeadKind::NClass;
    cfg.model.n_classes = static_cast<std::uint32_t>(ids.size());
    cfg.train.class_ids.assign(ids.begin(), ids.end());
  }
  const auto p = fit_pipeline(train, cfg);
  const auto in_rows = score_images(p, in_test);
  EvalReport rep;
  rep.protocol = "multi-class/" + to_string(mode);
  for (const auto& set : out_sets) rep.add(set.name, component_auroc(in_rows, score_images(p, set.images)).combined);
  return rep;
}

}  // namespace unode
