#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace geoskill {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a. Stable across platforms and releases; used for content ids,
/// request fingerprints, template hashes and feature hashing.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = kFnvOffsetBasis) {
  std::uint64_t h = seed;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

/// Fixed-width (16 char) lowercase hex.
std::string to_hex(std::uint64_t value);

std::string hex_digest(std::string_view data);

}  // namespace geoskill
