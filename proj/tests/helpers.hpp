#pragma once
// Small fixtures shared by the test executables.

#include <algorithm>
#include <string>
#include <vector>

#include "unode/eval/synth.hpp"
#include "unode/network/model.hpp"

namespace fixture {

/// 8x8 grayscale conv model small enough for exhaustive finite differences.
inline unode::ModelConfig tiny_config(unode::EncoderKind enc = unode::EncoderKind::Conv) {
  unode::ModelConfig c;
  c.height = c.width = 8;
  c.encoder = enc;
  c.conv_channels = {4, 6};
  c.mlp_hidden = 12;
  c.feat_dim = 8;
  c.proj_dim = 6;
  return c;
}

inline std::vector<unode::ImageSample> synth(std::vector<unode::SynthClass> classes, std::uint32_t n, std::uint64_t seed,
                                             std::uint32_t size = 8) {
  unode::SynthSpec s;
  s.classes = std::move(classes);
  s.n_per_class = n;
  s.seed = seed;
  s.height = s.width = size;
  return unode::gen_synth(s);
}

/// Overwrites a parameter in place; model parameters are shared handles.
template <class T>
void set_param(const unode::Model<T>& m, const std::string& name, const std::vector<double>& values) {
  auto t = m.param(name);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(values.size() == 1 ? values[0] : values[i]);
}

}  // namespace fixture
