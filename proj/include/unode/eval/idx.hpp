#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unode/augment/image.hpp"
#include "unode/core/binio.hpp"

namespace unode {

inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803: u8 data, 3 dims
inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801: u8 data, 1 dim

/// Big-endian IDX image and label files; pixels scaled by 1/255.
inline std::vector<ImageSample> load_idx(const std::string& images_path, const std::string& labels_path) {
  auto ri = binio::Reader::open(images_path);
  if (ri.be<std::uint32_t>() != kIdxImageMagic) fail_data("'" + images_path + "': bad IDX image magic");
  const auto n = ri.be<std::uint32_t>();
  const auto rows = ri.be<std::uint32_t>();
  const auto cols = ri.be<std::uint32_t>();
  if (rows == 0 || cols == 0) fail_data("'" + images_path + "': zero image size");
  if (ri.remaining() != std::size_t{n} * rows * cols) fail_data("'" + images_path + "': payload does not match header");

  auto rl = binio::Reader::open(labels_path);
  if (rl.be<std::uint32_t>() != kIdxLabelMagic) fail_data("'" + labels_path + "': bad IDX label magic");
  const auto nl = rl.be<std::uint32_t>();
  if (nl != n) fail_data("IDX label count " + std::to_string(nl) + " != image count " + std::to_string(n));
  if (rl.remaining() != n) fail_data("'" + labels_path + "': payload does not match header");

  std::vector<ImageSample> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ImageSample img(1, rows, cols);
    for (auto& p : img.pixels) p = static_cast<float>(ri.be<std::uint8_t>()) / 255.0f;
    img.label = rl.be<std::uint8_t>();
    out.push_back(std::move(img));
  }
  return out;
}

/// Writes single-channel labeled images; pixels are rounded from [0,1] to u8.
inline void save_idx(std::span<const ImageSample> images, const std::string& images_path,
                     const std::string& labels_path) {
  if (images.empty()) fail_usage("save_idx: no images");
  const auto rows = images.front().height, cols = images.front().width;
  binio::Writer wi, wl;
  wi.be<std::uint32_t>(kIdxImageMagic);
  wi.be<std::uint32_t>(static_cast<std::uint32_t>(images.size()));
  wi.be<std::uint32_t>(rows);
  wi.be<std::uint32_t>(cols);
  wl.be<std::uint32_t>(kIdxLabelMagic);
  wl.be<std::uint32_t>(static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) {
    if (img.channels != 1 || img.height != rows || img.width != cols) fail_usage("save_idx: images must be 1-channel, same size");
    if (!img.label || *img.label > 255) fail_usage("save_idx: every image needs a label in 0..255");
    for (float p : img.pixels) {
      const float c = std::clamp(p, 0.0f, 1.0f);
      wi.be<std::uint8_t>(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
    }
    wl.be<std::uint8_t>(static_cast<std::uint8_t>(*img.label));
  }
  wi.save(images_path);
  wl.save(labels_path);
}

}  // namespace unode
