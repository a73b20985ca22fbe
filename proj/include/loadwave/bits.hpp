#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "loadwave/error.hpp"

namespace loadwave {

/// Ordered sequence of binary symbols. Elements are always 0 or 1.
class BitVector {
 public:
  BitVector() = default;

  explicit BitVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
      if (b > 1) fail(ErrorCode::invalid_argument, "bit value must be 0 or 1");
    }
  }

  /// Parses a string of '0'/'1' characters.
  static BitVector from_string(std::string_view text) {
    std::vector<std::uint8_t> out;
    out.reserve(text.size());
    for (char c : text) {
      if (c != '0' && c != '1') {
        fail(ErrorCode::invalid_argument, "bit string may only contain '0' and '1'");
      }
      out.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return BitVector(std::move(out));
  }

  /// Big-endian (MSB first) encoding of the low `width` bits of `value`.
  static BitVector from_uint(std::uint64_t value, std::size_t width) {
    if (width == 0 || width > 64) fail(ErrorCode::invalid_argument, "width must be in [1, 64]");
    std::vector<std::uint8_t> out(width);
    for (std::size_t i = 0; i < width; ++i) {
      out[i] = static_cast<std::uint8_t>((value >> (width - 1 - i)) & 1u);
    }
    return BitVector(std::move(out));
  }

  /// Hex string, four bits per digit, MSB first. Accepts an optional 0x prefix.
  static BitVector from_hex(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
    if (hex.empty()) fail(ErrorCode::invalid_argument, "empty hex string");
    std::vector<std::uint8_t> out;
    out.reserve(hex.size() * 4);
    for (char c : hex) {
      int v = -1;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      if (v < 0) fail(ErrorCode::invalid_argument, std::string("invalid hex digit '") + c + "'");
      for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>((v >> k) & 1));
    }
    return BitVector(std::move(out));
  }

  template <class Rng>
  static BitVector random(std::size_t count, Rng& rng) {
    std::vector<std::uint8_t> out(count);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng() & 1u);
    return BitVector(std::move(out));
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  auto begin() const noexcept { return bits_.begin(); }
  auto end() const noexcept { return bits_.end(); }
  const std::vector<std::uint8_t>& data() const noexcept { return bits_; }

  void push_back(std::uint8_t bit) {
    if (bit > 1) fail(ErrorCode::invalid_argument, "bit value must be 0 or 1");
    bits_.push_back(bit);
  }

  void append(const BitVector& other) { bits_.insert(bits_.end(), other.begin(), other.end()); }

  BitVector slice(std::size_t offset, std::size_t count) const {
    if (offset + count > bits_.size()) fail(ErrorCode::invalid_argument, "slice out of range");
    return BitVector(std::vector<std::uint8_t>(bits_.begin() + static_cast<std::ptrdiff_t>(offset),
                                               bits_.begin() + static_cast<std::ptrdiff_t>(offset + count)));
  }

  /// MSB-first integer value; requires size() <= 64.
  std::uint64_t to_uint() const {
    if (bits_.size() > 64) fail(ErrorCode::invalid_argument, "bit vector wider than 64 bits");
    std::uint64_t v = 0;
    for (auto b : bits_) v = (v << 1) | b;
    return v;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(static_cast<char>('0' + b));
    return s;
  }

  /// Lower-case hex; size() must be a multiple of 4.
  std::string to_hex() const {
    if (bits_.size() % 4 != 0) fail(ErrorCode::invalid_argument, "bit count not a multiple of 4");
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < bits_.size(); i += 4) {
      int v = (bits_[i] << 3) | (bits_[i + 1] << 2) | (bits_[i + 2] << 1) | bits_[i + 3];
      s.push_back(digits[v]);
    }
    return s;
  }

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Positional bit differences over the common prefix; missing positions in
/// the shorter vector count as errors.
inline std::size_t count_bit_errors(const BitVector& sent, const BitVector& received) {
  std::size_t errors = 0;
  const std::size_t n = std::min(sent.size(), received.size());
  for (std::size_t i = 0; i < n; ++i) errors += sent[i] != received[i];
  errors += std::max(sent.size(), received.size()) - n;
  return errors;
}

}  // namespace loadwave
