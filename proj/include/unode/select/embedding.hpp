#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "unode/augment/image.hpp"
#include "unode/core/binio.hpp"

namespace unode {

/// n x d row-major feature matrix.
struct EmbeddingMatrix {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

inline void validate(const EmbeddingMatrix& m) {
  if (m.values.size() != std::size_t{m.n} * m.d) fail_data("embedding matrix size mismatch");
  for (float v : m.values) {
    if (!std::isfinite(v)) fail_numeric("embedding matrix contains NaN/Inf");
  }
}

inline EmbeddingMatrix concat(std::span<const EmbeddingMatrix> parts) {
  EmbeddingMatrix out;
  if (parts.empty()) return out;
  out.d = parts.front().d;
  for (const auto& p : parts) {
    if (p.d != out.d) fail_data("concat: embedding width mismatch");
    out.n += p.n;
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
  }
  return out;
}

inline constexpr std::string_view kEmbeddingMagic = "UNODEEMB";
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// "UNODEEMB", u32 version, u32 n, u32 d, n*d little-endian f32.
inline void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  validate(m);
  binio::Writer w;
  w.bytes(kEmbeddingMagic);
  w.le<std::uint32_t>(kEmbeddingVersion);
  w.le<std::uint32_t>(m.n);
  w.le<std::uint32_t>(m.d);
  for (float v : m.values) w.f32_le(v);
  w.save(path);
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  auto r = binio::Reader::open(path);
  if (r.bytes(kEmbeddingMagic.size()) != kEmbeddingMagic) fail_data("'" + path + "': bad embedding magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kEmbeddingVersion) fail_data("'" + path + "': unsupported embedding version " + std::to_string(version));
  EmbeddingMatrix m;
  m.n = r.le<std::uint32_t>();
  m.d = r.le<std::uint32_t>();
  const std::size_t count = std::size_t{m.n} * m.d;
  if (r.remaining() != count * 4) fail_data("'" + path + "': payload size does not match n*d");
  m.values.resize(count);
  for (auto& v : m.values) v = r.f32_le();
  validate(m);
  return m;
}

/// Maps a list of images to one feature row each.
using FeatureExtractor = std::function<EmbeddingMatrix(std::span<const ImageSample>)>;

inline FeatureExtractor flatten_extractor() {
  return [](std::span<const ImageSample> images) {
    EmbeddingMatrix m;
    m.n = static_cast<std::uint32_t>(images.size());
    m.d = static_cast<std::uint32_t>(images.front().size());
    m.values.reserve(std::size_t{m.n} * m.d);
    for (const auto& img : images) {
      if (img.size() != m.d) fail_data("flatten extractor: images differ in size");
      m.values.insert(m.values.end(), img.pixels.begin(), img.pixels.end());
    }
    return m;
  };
}

/// Serves rows of a precomputed matrix in order; the i-th call of `n` images gets the next n rows.
inline FeatureExtractor precomputed_extractor(EmbeddingMatrix table) {
  auto cursor = std::make_shared<std::size_t>(0);
  auto shared = std::make_shared<EmbeddingMatrix>(std::move(table));
  return [cursor, shared](std::span<const ImageSample> images) {
    if (*cursor + images.size() > shared->n) fail_data("precomputed embeddings exhausted");
    EmbeddingMatrix m;
    m.n = static_cast<std::uint32_t>(images.size());
    m.d = shared->d;
    m.values.assign(shared->values.begin() + *cursor * shared->d,
                    shared->values.begin() + (*cursor + images.size()) * shared->d);
    *cursor += images.size();
    return m;
  };
}

inline EmbeddingMatrix embed(std::span<const ImageSample> images, const FeatureExtractor& extractor) {
  if (images.empty()) fail_data("embed: empty image list");
  EmbeddingMatrix m = extractor(images);
  if (m.n != images.size()) fail_data("embed: extractor returned wrong row count");
  validate(m);
  return m;
}

}  // namespace unode
