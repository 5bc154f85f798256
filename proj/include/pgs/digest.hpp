#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace pgs {

/// 128-bit BLAKE2b digest of a canonical state payload. Two payloads map to
/// the same key iff they are byte-identical (up to digest collisions).
struct StateKey {
  std::array<std::uint8_t, 16> bytes{};

  static StateKey of(std::string_view payload);

  std::string hex() const;

  friend bool operator==(const StateKey&, const StateKey&) = default;
};

/// Hex encoding of a 128-bit digest over arbitrary bytes.
std::string digest_hex(std::string_view data);

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace pgs

template <>
struct std::hash<pgs::StateKey> {
  std::size_t operator()(const pgs::StateKey& key) const noexcept {
    std::size_t h = 0;
    for (std::size_t i = 0; i < sizeof(std::size_t); ++i) {
      h = (h << 8) | key.bytes[i];
    }
    return h;
  }
};
