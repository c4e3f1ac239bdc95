#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "unode/eval/idx.hpp"
#include "unode/eval/protocol.hpp"

namespace unode {

inline std::uint32_t parse_u32(const std::string& s, const std::string& what) {
  std::uint32_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    fail_usage(what + ": '" + s + "' is not a nonnegative 32-bit integer");
  }
  return v;
}

/// Flat `key = value` settings. Every key has a default; unknown keys are rejected.
class Config {
 public:
  Config() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"seed", "1"},
        {"out_dir", "out"},
        // data
        {"dataset", "synth"},
        {"synth_classes", "bars,rings,blobs"},
        {"synth_height", "16"},
        {"synth_width", "16"},
        {"synth_channels", "1"},
        {"n_train", "500"},
        {"n_test", "200"},
        {"idx_train_images", ""},
        {"idx_train_labels", ""},
        {"idx_test_images", ""},
        {"idx_test_labels", ""},
        {"inlier_class", "0"},
        {"eval_classes", ""},
        {"out_classes", "crosses,squares"},
        {"multiclass_mode", "unlabeled"},
        {"corruptions", "brightness:1,brightness:5,gaussian_noise:3,contrast:3"},
        // model
        {"encoder", "conv"},
        {"conv_channels", "16,32"},
        {"mlp_hidden", "128"},
        {"feat_dim", "64"},
        {"proj_dim", "128"},
        // optimizer
        {"optimizer", "lars"},
        {"lr", "1.0"},
        {"momentum", "0.9"},
        {"weight_decay", "1e-6"},
        {"warmup_epochs", "10"},
        {"epochs", "30"},
        {"trust_coefficient", "0.003"},
        // objective
        {"batch_size", "32"},
        {"lambda_loss", "1"},
        {"temperature", "1"},
        {"r_max", "0"},  // 0 = number of augmentations
        // augmentation selection
        {"augmentations", "rotate90,rotate180,rotate270,permute4,gaussian_noise,cutout,cutpaste,sobel,blur,mixup"},
        {"weights_file", ""},
        {"select_samples", "100"},
        {"select_with_encoder", "false"},
        {"tsne_perplexity", "30"},
        {"tsne_iters", "500"},
        {"tsne_learning_rate", "100"},
        {"bins", "64"},
        {"density_eps", "1e-6"},
        {"weight_temperature", "1"},
        // training and scoring artifacts
        {"checkpoint", ""},
        {"resume", "false"},
        // Stop after this many epochs (0 = run the full schedule); the schedule itself is unchanged.
        {"stop_epoch", "0"},
        // theory
        {"theory_a_norm", "4"},
        {"theory_eps", "0.5"},
        {"theory_d_grid", "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.5"},
        {"theory_samples", "1000000"},
        {"theory_setups", "20"},
    };
    return d;
  }

  static Config parse(const std::string& text, const std::string& source = "<config>") {
    Config c;
    std::istringstream in(text);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail_usage(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), source + ":" + std::to_string(lineno));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_usage("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    if (!values_.count(key)) fail_usage(where + ": unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail_usage("config key '" + key + "' does not exist");
    return it->second;
  }

  double f64(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail_usage("config key '" + key + "': '" + s + "' is not a number");
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      fail_usage("config key '" + key + "': '" + s + "' is not a nonnegative integer");
    }
    return v;
  }

  std::uint32_t u32(const std::string& key) const {
    const auto v = u64(key);
    if (v > 0xFFFFFFFFull) fail_usage("config key '" + key + "' out of range");
    return static_cast<std::uint32_t>(v);
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail_usage("config key '" + key + "': '" + s + "' is not a boolean");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  /// Every key with its effective value, sorted, in the same syntax the parser reads.
  std::string resolved() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline std::vector<double> parse_doubles(const Config& c, const std::string& key) {
  std::vector<double> out;
  for (const auto& s : c.list(key)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      fail_usage("config key '" + key + "': '" + s + "' is not a number");
    }
  }
  return out;
}

inline std::vector<CorruptionSpec> parse_corruptions(const Config& c) {
  std::vector<CorruptionSpec> out;
  for (const auto& item : c.list("corruptions")) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail_usage("corruption '" + item + "' must be kind:severity");
    CorruptionSpec spec;
    spec.kind = parse_corruption_kind(item.substr(0, colon));
    const auto sev = item.substr(colon + 1);
    if (sev.size() != 1 || sev[0] < '0' || sev[0] > '5') fail_usage("corruption '" + item + "': severity must be 0..5");
    spec.severity = static_cast<std::uint32_t>(sev[0] - '0');
    out.push_back(spec);
  }
  return out;
}

inline PipelineConfig pipeline_from_config(const Config& c) {
  PipelineConfig p;
  p.seed = c.u64("seed");
  p.model.channels = c.u32("synth_channels");
  p.model.height = c.u32("synth_height");
  p.model.width = c.u32("synth_width");
  p.model.encoder = parse_encoder_kind(c.str("encoder"));
  const auto ch = c.list("conv_channels");
  if (ch.size() != 2) fail_usage("conv_channels needs two values");
  p.model.conv_channels[0] = parse_u32(ch[0], "conv_channels");
  p.model.conv_channels[1] = parse_u32(ch[1], "conv_channels");
  p.model.mlp_hidden = c.u32("mlp_hidden");
  p.model.feat_dim = c.u32("feat_dim");
  p.model.proj_dim = c.u32("proj_dim");
  validate(p.model);

  p.optim.kind = parse_optim_kind(c.str("optimizer"));
  p.optim.lr_peak = c.f64("lr");
  p.optim.momentum = c.f64("momentum");
  p.optim.weight_decay = c.f64("weight_decay");
  p.optim.warmup_epochs = c.u32("warmup_epochs");
  p.optim.total_epochs = c.u32("epochs");
  p.optim.trust_coefficient = c.f64("trust_coefficient");

  p.train.batch_size = c.u32("batch_size");
  p.train.lambda_loss = c.f64("lambda_loss");
  p.train.temperature = c.f64("temperature");
  p.train.pairs.r_max = c.u32("r_max");

  p.kinds.clear();
  for (const auto& k : c.list("augmentations")) p.kinds.push_back(parse_hard_aug_kind(k));
  if (p.kinds.empty()) fail_usage("augmentations list is empty");
  if (p.train.pairs.r_max > p.kinds.size()) fail_usage("r_max must lie in 0..|augmentations|");
  p.select_samples = c.u32("select_samples");
  p.select_with_encoder = c.flag("select_with_encoder");
  p.selection.tsne.perplexity = c.f64("tsne_perplexity");
  p.selection.tsne.iters = c.u32("tsne_iters");
  p.selection.tsne.learning_rate = c.f64("tsne_learning_rate");
  p.selection.bins = c.u32("bins");
  p.selection.eps = c.f64("density_eps");
  p.selection.temperature = c.f64("weight_temperature");
  if (!c.str("weights_file").empty()) p.fixed_table = load_weight_table(c.str("weights_file"));
  return p;
}

/// Class ids named by the config: synthetic class names or plain integers.
inline std::uint32_t parse_class_id(const std::string& s) {
  if (!s.empty() && std::isdigit(static_cast<unsigned char>(s[0]))) return parse_u32(s, "class id");
  return static_cast<std::uint32_t>(parse_synth_class(s));
}

struct DataSplit {
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
  std::vector<std::uint32_t> class_ids;  // sorted, distinct
};

inline DataSplit load_data(const Config& c) {
  DataSplit d;
  const auto& kind = c.str("dataset");
  if (kind == "synth") {
    SynthSpec spec;
    spec.classes.clear();
    for (const auto& name : c.list("synth_classes")) spec.classes.push_back(parse_synth_class(name));
    if (spec.classes.empty()) fail_usage("synth_classes is empty");
    spec.channels = c.u32("synth_channels");
    spec.height = c.u32("synth_height");
    spec.width = c.u32("synth_width");
    spec.seed = c.u64("seed");
    auto [tr, te] = synth_split(spec, c.u32("n_train"), c.u32("n_test"));
    d.train = std::move(tr);
    d.test = std::move(te);
  } else if (kind == "idx") {
    d.train = load_idx(c.str("idx_train_images"), c.str("idx_train_labels"));
    d.test = load_idx(c.str("idx_test_images"), c.str("idx_test_labels"));
  } else {
    fail_usage("dataset must be 'synth' or 'idx'");
  }
  std::set<std::uint32_t> ids;
  for (const auto& img : d.train)
    if (img.label) ids.insert(*img.label);
  d.class_ids.assign(ids.begin(), ids.end());
  return d;
}

inline std::string class_name(const Config& c, std::uint32_t id) {
  return c.str("dataset") == "synth" && id < kAllSynthClasses.size() ? to_string(static_cast<SynthClass>(id))
                                                                     : std::to_string(id);
}

}  // namespace unode
