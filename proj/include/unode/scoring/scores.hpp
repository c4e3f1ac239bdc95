#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "unode/network/model.hpp"
#include "unode/select/weights.hpp"

namespace unode {

// Orientation contract: every score here is higher for more inlier-like inputs.

/// Per-image quantities all scores are computed from; one no-grad forward pass.
struct ScoreInputs {
  std::size_t n = 0;
  std::size_t proj_dim = 0;
  std::vector<float> zhat;      // unit projection rows
  std::vector<float> raw_norm;  // |z| before normalization
  std::size_t n_outputs = 0;
  std::vector<float> probs;     // head softmax rows
  // An n-class head with two classes is still scored by MSP.
  HeadKind head = HeadKind::Binary;
};

inline ScoreInputs score_inputs(const Model<float>& model, std::span<const ImageSample> images,
                                std::size_t chunk = 256) {
  if (images.empty()) fail_data("score: empty image list");
  NoGradGuard guard;
  ScoreInputs out;
  out.n = images.size();
  out.proj_dim = model.config().proj_dim;
  out.n_outputs = model.config().head_outputs();
  out.head = model.config().head;
  for (std::size_t s = 0; s < images.size(); s += chunk) {
    const auto part = images.subspan(s, std::min(chunk, images.size() - s));
    const auto feats = model.forward_features(part);
    const auto z = model.project_raw(feats);
    const auto zn = l2_normalize_rows(z);
    const auto norms = row_norms(z);
    const auto probs = model.head_probs(feats);
    out.zhat.insert(out.zhat.end(), zn.data().begin(), zn.data().end());
    out.raw_norm.insert(out.raw_norm.end(), norms.data().begin(), norms.data().end());
    out.probs.insert(out.probs.end(), probs.data().begin(), probs.data().end());
  }
  return out;
}

/// Unit projections of every training inlier.
struct TrainBank {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> embeddings;

  std::span<const float> row(std::size_t i) const { return {embeddings.data() + i * d, d}; }
};

inline TrainBank make_bank(const ScoreInputs& train) {
  return {train.n, train.proj_dim, train.zhat};
}

inline TrainBank build_bank(const Model<float>& model, std::span<const ImageSample> train) {
  return make_bank(score_inputs(model, train));
}

/// max_i <zhat, bank_i>.
inline float sim_score(std::span<const float> zhat, const TrainBank& bank) {
  if (bank.n == 0) fail_usage("sim_score: empty train bank");
  if (zhat.size() != bank.d) fail_usage("sim_score: embedding width does not match bank");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.n; ++i) {
    const auto r = bank.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < zhat.size(); ++k) s += static_cast<double>(zhat[k]) * r[k];
    best = std::max(best, s);
  }
  return static_cast<float>(best);
}

/// Inlier probability P(y=1|x): column 0 of a binary head.
inline float bin_score(std::span<const float> prob_row) {
  if (prob_row.size() != 2) fail_usage("bin_score: needs a binary head");
  return prob_row[0];
}

/// Maximum softmax probability; the usual 1 - MSP outlier score is its negation plus one.
inline float msp_score(std::span<const float> prob_row) {
  if (prob_row.empty()) fail_usage("msp_score: empty probability row");
  return *std::max_element(prob_row.begin(), prob_row.end());
}

struct ScoreCalibration {
  double mean_bin = 1.0;
  double mean_norm = 1.0;
  double lambda_score = 1.0;
};

inline ScoreCalibration calibrate_from(std::span<const float> bin_scores, std::span<const float> raw_norms) {
  if (bin_scores.empty() || raw_norms.empty()) fail_data("calibrate: empty training set");
  double b = 0.0, z = 0.0;
  for (float v : bin_scores) b += v;
  for (float v : raw_norms) z += v;
  ScoreCalibration c;
  c.mean_bin = b / static_cast<double>(bin_scores.size());
  c.mean_norm = z / static_cast<double>(raw_norms.size());
  if (!(c.mean_bin > 0.0)) fail_numeric("calibrate: mean binary score is zero");
  c.lambda_score = c.mean_norm / c.mean_bin;
  return c;
}

/// Binary head: calibrates on P(y=1). N-class head: on the maximum softmax probability.
inline ScoreCalibration calibrate(const ScoreInputs& train) {
  std::vector<float> head;
  for (std::size_t i = 0; i < train.n; ++i) {
    const std::span<const float> p(train.probs.data() + i * train.n_outputs, train.n_outputs);
    head.push_back(train.head == HeadKind::Binary ? bin_score(p) : msp_score(p));
  }
  return calibrate_from(head, train.raw_norm);
}

inline ScoreCalibration calibrate(const Model<float>& model, std::span<const ImageSample> train) {
  return calibrate(score_inputs(model, train));
}

inline double combined_score(double sim, double bin, double lambda_score) { return sim + lambda_score * bin; }

struct ScoreRow {
  float sim = 0.0f;
  // P(y=1) for a binary head; MSP for an n-class head.
  float bin = 0.0f;
  float combined = 0.0f;
  float msp = 0.0f;
};

inline std::vector<ScoreRow> score_all(const ScoreInputs& in, const TrainBank& bank, const ScoreCalibration& cal) {
  std::vector<ScoreRow> rows(in.n);
  for (std::size_t i = 0; i < in.n; ++i) {
    const std::span<const float> z(in.zhat.data() + i * in.proj_dim, in.proj_dim);
    const std::span<const float> p(in.probs.data() + i * in.n_outputs, in.n_outputs);
    rows[i].sim = sim_score(z, bank);
    rows[i].msp = msp_score(p);
    rows[i].bin = in.head == HeadKind::Binary ? bin_score(p) : rows[i].msp;
    rows[i].combined = static_cast<float>(combined_score(rows[i].sim, rows[i].bin, cal.lambda_score));
  }
  return rows;
}

/// sample_id,label,sim,bin,combined; label is empty for unlabeled images.
inline std::string scores_csv(std::span<const ScoreRow> rows, std::span<const ImageSample> images) {
  if (rows.size() != images.size()) fail_usage("scores_csv: row count mismatch");
  std::string s = "sample_id,label,sim,bin,combined\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s += std::to_string(i) + "," + (images[i].label ? std::to_string(*images[i].label) : std::string{}) + "," +
         format_double(rows[i].sim) + "," + format_double(rows[i].bin) + "," + format_double(rows[i].combined) + "\n";
  }
  return s;
}

}  // namespace unode
