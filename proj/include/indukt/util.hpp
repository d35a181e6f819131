#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace indukt {

/// Lowercase hex SHA-256 digest (64 characters).
std::string sha256_hex(std::string_view data);

/// One SplitMix64 step; used to derive independent seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix_seed(a ^ mix_seed(b));
}

/// First 16 hex digits of a digest, read as an integer.
std::uint64_t digest_prefix(std::string_view hex);

/// Lowercase, trim, collapse internal whitespace.
std::string normalize_text(std::string_view text);

std::string trim(std::string_view text);

}  // namespace indukt
