#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace saratoga {

// Offsets and sizes span the full 128-bit space.
__extension__ typedef unsigned __int128 u128;

inline constexpr u128 kU128Max = ~static_cast<u128>(0);

constexpr u128 make_u128(std::uint64_t hi, std::uint64_t lo) {
  return (static_cast<u128>(hi) << 64) | lo;
}

constexpr std::uint64_t high64(u128 v) { return static_cast<std::uint64_t>(v >> 64); }
constexpr std::uint64_t low64(u128 v) { return static_cast<std::uint64_t>(v); }

/// 2^bits as u128; bits must be < 128.
constexpr u128 pow2(unsigned bits) { return static_cast<u128>(1) << bits; }

std::string to_string(u128 v);
std::string to_hex(u128 v);

/// Parses a non-negative decimal string; nullopt on junk or overflow.
std::optional<u128> parse_u128(std::string_view text);

/// Saturating conversion for reporting.
double to_double(u128 v);

}  // namespace saratoga
