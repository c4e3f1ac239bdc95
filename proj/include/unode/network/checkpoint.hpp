#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unode/core/binio.hpp"
#include "unode/core/optim.hpp"
#include "unode/network/model.hpp"

namespace unode {

inline constexpr std::string_view kCheckpointMagic = "UNODECKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kMomentumPrefix = "optim/";

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Model parameters, optional momentum buffers (named "optim/<param>") and the number of
/// optimizer steps taken so far.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t digest = 0;
  std::vector<CheckpointTensor> tensors;
  std::uint64_t step = 0;
};

inline Checkpoint make_checkpoint(const Model<float>& model, const OptimState<float>* optim = nullptr,
                                  std::uint64_t step = 0) {
  Checkpoint ck;
  ck.digest = config_digest(model.config());
  ck.step = step;
  const auto& params = model.named_params();
  for (const auto& p : params) {
    ck.tensors.push_back({p.name, p.value.shape(), {p.value.data().begin(), p.value.data().end()}});
  }
  if (optim && !optim->momentum_buffers.empty()) {
    if (optim->momentum_buffers.size() != params.size()) fail_usage("checkpoint: optimizer state does not match model");
    for (std::size_t k = 0; k < params.size(); ++k) {
      ck.tensors.push_back({std::string(kMomentumPrefix) + params[k].name, params[k].value.shape(),
                            optim->momentum_buffers[k]});
    }
  }
  return ck;
}

/// "UNODECKP", u32 version, u64 digest, u32 count, per tensor (u32 name length, name,
/// u32 rank, u32 dims, LE f32 values), then u64 step.
inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  binio::Writer w;
  w.bytes(kCheckpointMagic);
  w.le<std::uint32_t>(ck.version);
  w.le<std::uint64_t>(ck.digest);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (shape_numel(t.shape) != t.values.size()) fail_usage("checkpoint: tensor '" + t.name + "' size mismatch");
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32_le(v);
  }
  w.le<std::uint64_t>(ck.step);
  return w.buffer();
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  binio::Writer w;
  const auto bytes = encode_checkpoint(ck);
  w.bytes(std::string_view(bytes.data(), bytes.size()));
  w.save(path);
}

inline Checkpoint decode_checkpoint(binio::Reader r) {
  const std::string& src = r.source();
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) fail_data("'" + src + "': bad checkpoint magic");
  Checkpoint ck;
  ck.version = r.le<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    fail_data("'" + src + "': unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.digest = r.le<std::uint64_t>();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.bytes(r.le<std::uint32_t>());
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) fail_data("'" + src + "': implausible tensor rank");
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.le<std::uint32_t>());
    const std::size_t n = shape_numel(t.shape);
    if (n * 4 > r.remaining()) fail_data("'" + src + "': truncated file");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32_le();
    ck.tensors.push_back(std::move(t));
  }
  ck.step = r.le<std::uint64_t>();
  if (r.remaining() != 0) fail_data("'" + src + "': trailing bytes after checkpoint");
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(binio::Reader::open(path)); }

/// Copies checkpoint values into `model` (and `optim` if given). Returns the stored step.
inline std::uint64_t restore(const Checkpoint& ck, Model<float>& model, OptimState<float>* optim = nullptr) {
  if (ck.digest != config_digest(model.config())) {
    fail_data("checkpoint config digest does not match model config (" + model.config().canonical() + ")");
  }
  auto& params = model.named_params();
  auto find = [&](const std::string& name) -> const CheckpointTensor* {
    for (const auto& t : ck.tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  for (auto& p : params) {
    const auto* t = find(p.name);
    if (!t) fail_data("checkpoint lacks parameter '" + p.name + "'");
    if (t->shape != p.value.shape()) fail_data("checkpoint parameter '" + p.name + "' has wrong shape");
  }
  for (auto& p : params) {
    const auto* t = find(p.name);
    std::copy(t->values.begin(), t->values.end(), p.value.mutable_data().begin());
  }
  if (optim) {
    optim->momentum_buffers.clear();
    if (find(std::string(kMomentumPrefix) + params.front().name)) {
      for (auto& p : params) {
        const auto* t = find(std::string(kMomentumPrefix) + p.name);
        if (!t || t->values.size() != p.value.numel()) fail_data("checkpoint momentum for '" + p.name + "' missing");
        optim->momentum_buffers.push_back(t->values);
      }
    }
  }
  return ck.step;
}

inline void save_model(const Model<float>& model, const std::string& path, std::uint64_t step = 0,
                       const OptimState<float>* optim = nullptr) {
  save_checkpoint(make_checkpoint(model, optim, step), path);
}

inline std::uint64_t load_model(Model<float>& model, const std::string& path, OptimState<float>* optim = nullptr) {
  return restore(read_checkpoint(path), model, optim);
}

}  // namespace unode
