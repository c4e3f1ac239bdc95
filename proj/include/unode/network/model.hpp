#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unode/augment/image.hpp"
#include "unode/core/ops.hpp"
#include "unode/core/rng.hpp"
#include "unode/select/embedding.hpp"

namespace unode {

enum class EncoderKind { Conv, Mlp };
enum class HeadKind { Binary, NClass };

inline std::string to_string(EncoderKind k) { return k == EncoderKind::Conv ? "conv" : "mlp"; }
inline std::string to_string(HeadKind k) { return k == HeadKind::Binary ? "binary" : "nclass"; }

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "conv") return EncoderKind::Conv;
  if (s == "mlp") return EncoderKind::Mlp;
  fail_usage("unknown encoder '" + s + "'");
}

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "binary") return HeadKind::Binary;
  if (s == "nclass") return HeadKind::NClass;
  fail_usage("unknown head '" + s + "'");
}

/// Conv encoder: three 3x3 stride-2 blocks (conv_channels[0], conv_channels[1], feat_dim), ReLU,
/// global average pool. MLP encoder: flatten, hidden, feat_dim, ReLU after each.
struct ModelConfig {
  std::uint32_t channels = 1;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  EncoderKind encoder = EncoderKind::Conv;
  std::array<std::uint32_t, 2> conv_channels{16, 32};
  std::uint32_t mlp_hidden = 128;
  std::uint32_t feat_dim = 64;
  std::uint32_t proj_dim = 128;
  HeadKind head = HeadKind::Binary;
  // Output classes of the n-class head; the binary head always has 2 (inlier, outlier).
  std::uint32_t n_classes = 2;

  std::uint32_t head_outputs() const { return head == HeadKind::Binary ? 2u : n_classes; }

  /// Canonical text form; the checkpoint digest is computed over it.
  std::string canonical() const {
    std::string s = "in=" + std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    s += ";enc=" + to_string(encoder);
    if (encoder == EncoderKind::Conv) {
      s += ";conv=" + std::to_string(conv_channels[0]) + "," + std::to_string(conv_channels[1]);
    } else {
      s += ";hidden=" + std::to_string(mlp_hidden);
    }
    s += ";feat=" + std::to_string(feat_dim) + ";proj=" + std::to_string(proj_dim);
    s += ";head=" + to_string(head) + ";out=" + std::to_string(head_outputs());
    return s;
  }
};

inline void validate(const ModelConfig& c) {
  if (c.channels == 0 || c.height == 0 || c.width == 0) fail_usage("model: input dims must be > 0");
  if (c.feat_dim == 0 || c.proj_dim == 0) fail_usage("model: feat_dim and proj_dim must be > 0");
  if (c.encoder == EncoderKind::Conv && (c.conv_channels[0] == 0 || c.conv_channels[1] == 0)) {
    fail_usage("model: conv channels must be > 0");
  }
  if (c.encoder == EncoderKind::Mlp && c.mlp_hidden == 0) fail_usage("model: mlp_hidden must be > 0");
  if (c.head == HeadKind::NClass && c.n_classes < 2) fail_usage("model: nclass head needs n_classes >= 2");
}

/// FNV-1a 64 over the canonical config text.
inline std::uint64_t config_digest(const ModelConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : c.canonical()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <std::floating_point T>
struct NamedParam {
  std::string name;
  Tensor<T> value;
};

/// Encoder f, projection head g (Linear-ReLU-Linear) and classification head h.
template <std::floating_point T = float>
class Model {
 public:
  Model() = default;

  /// Fan-in scaled uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg_);
    const Rng root(seed, 0x4D4F444Cull);
    std::uint64_t id = 0;
    auto weight = [&](const std::string& name, Shape shape, std::size_t fan_in) {
      Rng r = root.fork(id++);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::vector<T> v(shape_numel(shape));
      for (auto& x : v) x = static_cast<T>(r.uniform(-bound, bound));
      params_.push_back({name, Tensor<T>::from(std::move(shape), std::move(v), true)});
    };
    auto bias = [&](const std::string& name, std::size_t n) {
      ++id;
      params_.push_back({name, Tensor<T>::zeros({n}, true)});
    };
    if (cfg_.encoder == EncoderKind::Conv) {
      const std::array<std::size_t, 4> ch{cfg_.channels, cfg_.conv_channels[0], cfg_.conv_channels[1], cfg_.feat_dim};
      for (std::size_t b = 0; b < 3; ++b) {
        const std::string p = "enc.conv" + std::to_string(b);
        weight(p + ".w", {ch[b + 1], ch[b], 3, 3}, ch[b] * 9);
        bias(p + ".b", ch[b + 1]);
      }
    } else {
      const std::size_t in = std::size_t{cfg_.channels} * cfg_.height * cfg_.width;
      weight("enc.fc0.w", {in, cfg_.mlp_hidden}, in);
      bias("enc.fc0.b", cfg_.mlp_hidden);
      weight("enc.fc1.w", {cfg_.mlp_hidden, cfg_.feat_dim}, cfg_.mlp_hidden);
      bias("enc.fc1.b", cfg_.feat_dim);
    }
    weight("proj.fc0.w", {cfg_.feat_dim, cfg_.proj_dim}, cfg_.feat_dim);
    bias("proj.fc0.b", cfg_.proj_dim);
    weight("proj.fc1.w", {cfg_.proj_dim, cfg_.proj_dim}, cfg_.proj_dim);
    bias("proj.fc1.b", cfg_.proj_dim);
    weight("head.w", {cfg_.feat_dim, cfg_.head_outputs()}, cfg_.feat_dim);
    bias("head.b", cfg_.head_outputs());
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<NamedParam<T>>& named_params() noexcept { return params_; }
  const std::vector<NamedParam<T>>& named_params() const noexcept { return params_; }

  /// Handles sharing storage with the model, in registration order.
  std::vector<Tensor<T>> params() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  const Tensor<T>& param(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.value;
    fail_usage("model has no parameter '" + name + "'");
  }

  /// Packs images into an (N, C, H, W) tensor; every image must match the configured input.
  Tensor<T> pack(std::span<const ImageSample> images) const {
    if (images.empty()) fail_data("model: empty batch");
    std::vector<T> v;
    v.reserve(images.size() * std::size_t{cfg_.channels} * cfg_.height * cfg_.width);
    for (const auto& img : images) {
      if (img.channels != cfg_.channels || img.height != cfg_.height || img.width != cfg_.width) {
        fail_data("model: image shape " + std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" +
                  std::to_string(img.width) + " does not match config");
      }
      for (float p : img.pixels) v.push_back(static_cast<T>(p));
    }
    return Tensor<T>::from({images.size(), cfg_.channels, cfg_.height, cfg_.width}, std::move(v));
  }

  /// (B, feat_dim) features.
  Tensor<T> forward_features(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
      fail_data("forward_features: input shape " + shape_str(x.shape()) + " does not match config");
    }
    if (cfg_.encoder == EncoderKind::Conv) {
      Tensor<T> h = x;
      for (std::size_t b = 0; b < 3; ++b) {
        const std::string p = "enc.conv" + std::to_string(b);
        h = relu(conv2d(h, param(p + ".w"), param(p + ".b"), 2, 1));
      }
      return global_avg_pool(h);
    }
    Tensor<T> h = reshape(x, {x.dim(0), x.numel() / x.dim(0)});
    h = relu(linear(h, "enc.fc0"));
    return relu(linear(h, "enc.fc1"));
  }

  Tensor<T> forward_features(std::span<const ImageSample> images) const { return forward_features(pack(images)); }

  /// Pre-normalization projection z.
  Tensor<T> project_raw(const Tensor<T>& features) const {
    check_features(features);
    return linear(relu(linear(features, "proj.fc0")), "proj.fc1");
  }

  /// Unit-norm rows z/(|z| + 1e-12).
  Tensor<T> project(const Tensor<T>& features) const { return l2_normalize_rows(project_raw(features)); }

  Tensor<T> head_logits(const Tensor<T>& features) const {
    check_features(features);
    return linear(features, "head");
  }

  Tensor<T> head_probs(const Tensor<T>& features) const { return softmax_rows(head_logits(features)); }

  /// Same architecture and values in another precision; used by finite-difference checks.
  template <std::floating_point U>
  Model<U> cast() const {
    Model<U> out;
    out.cfg_ = cfg_;
    for (const auto& p : params_) {
      std::vector<U> v(p.value.data().begin(), p.value.data().end());
      out.params_.push_back({p.name, Tensor<U>::from(p.value.shape(), std::move(v), true)});
    }
    return out;
  }

 private:
  template <std::floating_point>
  friend class Model;

  Tensor<T> linear(const Tensor<T>& x, const std::string& prefix) const {
    return add_rowvec(matmul(x, param(prefix + ".w")), param(prefix + ".b"));
  }

  void check_features(const Tensor<T>& f) const {
    if (f.rank() != 2 || f.dim(1) != cfg_.feat_dim) {
      fail_data("model: feature shape " + shape_str(f.shape()) + " does not match feat_dim");
    }
  }

  ModelConfig cfg_;
  std::vector<NamedParam<T>> params_;
};

/// Encoder features as a selection-time extractor; runs without recording a graph.
inline FeatureExtractor encoder_extractor(Model<float> model, std::size_t chunk = 256) {
  return [model = std::move(model), chunk](std::span<const ImageSample> images) {
    NoGradGuard guard;
    EmbeddingMatrix m;
    m.n = static_cast<std::uint32_t>(images.size());
    m.d = model.config().feat_dim;
    for (std::size_t s = 0; s < images.size(); s += chunk) {
      const auto part = images.subspan(s, std::min(chunk, images.size() - s));
      const auto f = model.forward_features(part);
      m.values.insert(m.values.end(), f.data().begin(), f.data().end());
    }
    return m;
  };
}

}  // namespace unode
