#pragma once

// Little-endian primitives shared by every on-disk and on-wire format.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vad/errors.hpp"

namespace vad {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }

  void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  void magic(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

  // u16 length prefix followed by UTF-8 bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw InvalidArgument("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  std::size_t size() const noexcept { return buf_.size(); }
  const Bytes& bytes() const& noexcept { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

// Bounds-checked reader. Running off the end raises FormatError::truncated.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data, std::string context = "buffer")
      : data_(data), context_(std::move(context)) {}

  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }

  void f32s(std::span<float> out) {
    require(out.size() * 4);
    for (float& v : out) v = f32();
  }

  std::span<const std::uint8_t> raw(std::size_t n) {
    require(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::string str16() {
    const std::size_t n = u16();
    auto s = raw(n);
    return std::string(s.begin(), s.end());
  }

  void expect_magic(std::string_view tag) {
    require(tag.size());
    if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0)
      throw FormatError(FormatError::Kind::bad_magic, context_ + ": expected magic \"" + std::string(tag) + "\"");
    pos_ += tag.size();
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  const std::string& context() const noexcept { return context_; }

  void require(std::size_t n) const {
    if (remaining() < n)
      throw FormatError(FormatError::Kind::truncated, context_ + ": truncated (need " + std::to_string(n) +
                                                          " bytes at offset " + std::to_string(pos_) + ", have " +
                                                          std::to_string(remaining()) + ")");
  }

 private:
  template <typename U>
  U get_le() {
    require(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace vad
