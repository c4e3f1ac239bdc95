#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unode/core/error.hpp"
#include "unode/select/weights.hpp"

namespace unode {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Arithmetic mean and sample standard deviation (n - 1); std is 0 for a single entry.
inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) fail_usage("mean_std: empty list");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

struct EvalReport {
  std::string protocol;
  std::optional<std::string> corruption;
  std::vector<std::string> entries;
  std::vector<double> per_class_auroc;
  double mean = 0.0;
  double std = 0.0;

  void add(std::string name, double auroc) {
    if (!(auroc >= 0.0 && auroc <= 1.0)) fail_numeric("report: AUROC outside [0,1]");
    entries.push_back(std::move(name));
    per_class_auroc.push_back(auroc);
    const auto ms = mean_std(per_class_auroc);
    mean = ms.mean;
    std = ms.std;
  }
};

inline std::string report_csv(const EvalReport& r) {
  std::string s = "protocol,corruption,entry,auroc\n";
  const std::string prefix = r.protocol + "," + r.corruption.value_or("") + ",";
  for (std::size_t i = 0; i < r.entries.size(); ++i) s += prefix + r.entries[i] + "," + format_double(r.per_class_auroc[i]) + "\n";
  s += prefix + "Mean," + format_double(r.mean) + "\n";
  s += prefix + "STD," + format_double(r.std) + "\n";
  return s;
}

/// Plain-text table with AUROC in percent and trailing Mean and STD rows.
inline std::string report_table(const EvalReport& r) {
  std::size_t w = 5;
  for (const auto& e : r.entries) w = std::max(w, e.size());
  std::string s = r.protocol + (r.corruption ? " [" + *r.corruption + "]" : "") + "\n";
  auto line = [&](const std::string& name, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * v);
    s += name + std::string(w - name.size() + 2, ' ') + buf + "\n";
  };
  s += "entry" + std::string(w - 3, ' ') + " AUROC %\n";
  s += std::string(w + 10, '-') + "\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) line(r.entries[i], r.per_class_auroc[i]);
  s += std::string(w + 10, '-') + "\n";
  line("Mean", r.mean);
  line("STD", r.std);
  return s;
}

/// Class x corruption AUROC grid with both reduction orders.
struct GridReport {
  std::vector<std::string> classes;
  std::vector<std::string> corruptions;
  std::vector<std::vector<double>> auroc;  // [class][corruption]

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& row : auroc) n += row.size();
    return n;
  }

  /// Average over corruptions first, then mean/std across classes.
  MeanStd corruption_then_class() const {
    std::vector<double> per_class;
    for (const auto& row : auroc) per_class.push_back(mean_std(row).mean);
    return mean_std(per_class);
  }

  /// Average over classes first, then mean/std across corruptions.
  MeanStd class_then_corruption() const {
    std::vector<double> per_corr;
    for (std::size_t k = 0; k < corruptions.size(); ++k) {
      std::vector<double> col;
      for (const auto& row : auroc) col.push_back(row.at(k));
      per_corr.push_back(mean_std(col).mean);
    }
    return mean_std(per_corr);
  }
};

inline std::string grid_csv(const GridReport& g) {
  std::string s = "class,corruption,auroc\n";
  for (std::size_t c = 0; c < g.classes.size(); ++c)
    for (std::size_t k = 0; k < g.corruptions.size(); ++k)
      s += g.classes[c] + "," + g.corruptions[k] + "," + format_double(g.auroc[c][k]) + "\n";
  const auto a = g.corruption_then_class(), b = g.class_then_corruption();
  s += "Mean,corruption_then_class," + format_double(a.mean) + "\n";
  s += "STD,corruption_then_class," + format_double(a.std) + "\n";
  s += "Mean,class_then_corruption," + format_double(b.mean) + "\n";
  s += "STD,class_then_corruption," + format_double(b.std) + "\n";
  return s;
}

inline std::string grid_table(const GridReport& g) {
  std::string s = "class";
  std::size_t w = 8;
  for (const auto& c : g.classes) w = std::max(w, c.size());
  s += std::string(w - 3, ' ');
  for (const auto& k : g.corruptions) s += " " + k;
  s += "\n";
  for (std::size_t c = 0; c < g.classes.size(); ++c) {
    s += g.classes[c] + std::string(w - g.classes[c].size() + 2, ' ');
    for (std::size_t k = 0; k < g.corruptions.size(); ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %*.2f", static_cast<int>(g.corruptions[k].size()), 100.0 * g.auroc[c][k]);
      s += buf;
    }
    s += "\n";
  }
  const auto a = g.corruption_then_class(), b = g.class_then_corruption();
  char buf[160];
  std::snprintf(buf, sizeof buf, "Mean %.2f  STD %.2f  (per class)\nMean %.2f  STD %.2f  (per corruption)\n",
                100.0 * a.mean, 100.0 * a.std, 100.0 * b.mean, 100.0 * b.std);
  return s + buf;
}

}  // namespace unode
