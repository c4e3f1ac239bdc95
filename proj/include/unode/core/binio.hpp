#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unode/core/error.hpp"

namespace unode::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
U byteswap(U v) noexcept {
  U out{};
  auto* src = reinterpret_cast<const unsigned char*>(&v);
  auto* dst = reinterpret_cast<unsigned char*>(&out);
  for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
  return out;
}

/// Append-only byte buffer with explicit endianness.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <class U>
  void le(U v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    raw(&v, sizeof(U));
  }

  template <class U>
  void be(U v) {
    if constexpr (std::endian::native == std::endian::little) v = byteswap(v);
    raw(&v, sizeof(U));
  }

  void f32_le(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  const std::vector<char>& buffer() const noexcept { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_data("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail_data("write failed for '" + path + "'");
  }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

/// Bounds-checked cursor over a byte buffer; every overrun is a DataError.
class Reader {
 public:
  Reader(std::vector<char> data, std::string source) : buf_(std::move(data)), source_(std::move(source)) {}

  static Reader open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_data("cannot open '" + path + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(data), path);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <class U>
  U le() {
    U v = take<U>();
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    return v;
  }

  template <class U>
  U be() {
    U v = take<U>();
    if constexpr (std::endian::native == std::endian::little) v = byteswap(v);
    return v;
  }

  float f32_le() { return std::bit_cast<float>(le<std::uint32_t>()); }

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  const std::string& source() const noexcept { return source_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail_data("'" + source_ + "': truncated file");
  }
  template <class U>
  U take() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::vector<char> buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace unode::binio
