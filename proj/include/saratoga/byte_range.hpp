#pragma once

#include "saratoga/uint128.hpp"

namespace saratoga {

/// Half-open byte interval [start, end).
struct ByteRange {
  u128 start = 0;
  u128 end = 0;

  constexpr u128 length() const { return end - start; }
  constexpr bool empty() const { return end <= start; }
  friend constexpr bool operator==(const ByteRange&, const ByteRange&) = default;
};

}  // namespace saratoga
