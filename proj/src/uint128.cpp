#include "saratoga/uint128.hpp"

#include <algorithm>

namespace saratoga {

std::string to_string(u128 v) {
  if (v == 0) return "0";
  std::string out;
  while (v != 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string to_hex(u128 v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out = "0x";
  bool started = false;
  for (int shift = 124; shift >= 0; shift -= 4) {
    const auto nibble = static_cast<unsigned>((v >> shift) & 0xF);
    if (nibble != 0 || started || shift == 0) {
      out.push_back(kDigits[nibble]);
      started = true;
    }
  }
  return out;
}

std::optional<u128> parse_u128(std::string_view text) {
  if (text.empty()) return std::nullopt;
  u128 v = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    const auto digit = static_cast<unsigned>(c - '0');
    if (v > (kU128Max - digit) / 10) return std::nullopt;
    v = v * 10 + digit;
  }
  return v;
}

double to_double(u128 v) {
  return static_cast<double>(high64(v)) * 18446744073709551616.0 +
         static_cast<double>(low64(v));
}

}  // namespace saratoga
