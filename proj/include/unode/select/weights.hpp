#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "unode/augment/hard.hpp"

namespace unode {

/// Per-augmentation divergence scores and their softmax weights.
struct AugWeightTable {
  std::vector<HardAugKind> kinds;
  std::vector<double> j_scores;
  std::vector<double> weights;

  std::size_t size() const noexcept { return kinds.size(); }

  double weight_of(HardAugKind kind) const {
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == kind) return weights[k];
    fail_usage("weight table has no entry for " + to_string(kind));
  }

  /// 0-based rank of `kind` by descending weight (0 = heaviest).
  std::size_t rank_of(HardAugKind kind) const {
    const double w = weight_of(kind);
    return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [w](double v) { return v > w; }));
  }
};

/// exp(j_k / tau) / sum_m exp(j_m / tau), computed with a max shift.
inline std::vector<double> softmax_weights(std::span<const double> j_scores, double tau = 1.0) {
  if (j_scores.empty()) fail_usage("aug_weights: empty score list");
  if (!(tau > 0.0)) fail_usage("aug_weights: temperature must be positive");
  for (double j : j_scores) {
    if (!std::isfinite(j)) fail_numeric("aug_weights: non-finite divergence score");
  }
  const double mx = *std::max_element(j_scores.begin(), j_scores.end());
  std::vector<double> w(j_scores.size());
  double z = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) z += (w[k] = std::exp((j_scores[k] - mx) / tau));
  for (auto& v : w) v /= z;
  return w;
}

inline AugWeightTable aug_weights(std::vector<HardAugKind> kinds, std::span<const double> j_scores, double tau = 1.0) {
  if (kinds.size() != j_scores.size()) fail_usage("aug_weights: kinds and scores differ in length");
  AugWeightTable t;
  t.weights = softmax_weights(j_scores, tau);
  t.kinds = std::move(kinds);
  t.j_scores.assign(j_scores.begin(), j_scores.end());
  return t;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// CSV with header `kind,j_score,weight`.
inline std::string weight_table_csv(const AugWeightTable& t) {
  std::string s = "kind,j_score,weight\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    s += to_string(t.kinds[k]) + "," + format_double(t.j_scores[k]) + "," + format_double(t.weights[k]) + "\n";
  }
  return s;
}

inline AugWeightTable parse_weight_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "kind,j_score,weight") fail_data("weight table: bad CSV header");
  AugWeightTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) fail_data("weight table: malformed row '" + line + "'");
    try {
      t.kinds.push_back(parse_hard_aug_kind(line.substr(0, c1)));
      t.j_scores.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
      t.weights.push_back(std::stod(line.substr(c2 + 1)));
    } catch (const std::logic_error&) {
      fail_data("weight table: malformed row '" + line + "'");
    }
  }
  if (t.kinds.empty()) fail_data("weight table: no rows");
  return t;
}

inline AugWeightTable load_weight_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open weight table '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_weight_table_csv(ss.str());
}

/// Fixed-width bar chart of the weights, heaviest first.
inline std::string weight_table_report(const AugWeightTable& t) {
  std::vector<std::size_t> order(t.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t.weights[a] > t.weights[b]; });
  std::string s;
  for (auto k : order) {
    char buf[160];
    const int bar = static_cast<int>(std::lround(t.weights[k] * 40.0));
    std::snprintf(buf, sizeof buf, "%-15s j=%10.4f  w=%.4f  ", to_string(t.kinds[k]).c_str(), t.j_scores[k], t.weights[k]);
    s += buf + std::string(static_cast<std::size_t>(bar), '#') + "\n";
  }
  return s;
}

}  // namespace unode
