#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "saratoga/byte_range.hpp"
#include "saratoga/uint128.hpp"

namespace saratoga::holes {

enum class MarkResult { Ok, EmptyRange, Overflow, RangeBeyondEnd };

/// Receiver-side reassembly map over the 128-bit byte space. Received data is
/// kept as sorted, disjoint, non-adjacent ranges; holes are the gaps.
class HoleTracker {
 public:
  /// Streaming tracker: the size is unknown and holes are bounded by the
  /// highest byte received so far.
  HoleTracker() = default;
  explicit HoleTracker(u128 expected_size) : expected_size_(expected_size) {}

  /// Records [offset, offset + len). Idempotent; merges with neighbours.
  MarkResult mark_received(u128 offset, u128 len);

  /// The first `max` gaps below the hole bound, ascending.
  std::vector<ByteRange> hole_list(std::size_t max) const;

  /// Portions of `r` not yet received, ascending.
  std::vector<ByteRange> missing_within(ByteRange r) const;

  bool is_complete() const;

  /// Lowest byte not contiguously received from zero.
  u128 progress() const;

  /// Fixes the size of a tracker created without one. Fails if data
  /// already recorded lies beyond it.
  bool set_expected_size(u128 size);

  std::optional<u128> expected_size() const { return expected_size_; }
  u128 high_water() const { return high_water_; }
  u128 received_bytes() const { return received_bytes_; }
  std::size_t range_count() const { return received_.size(); }
  std::vector<ByteRange> received_ranges() const;
  bool contains(u128 offset) const;

 private:
  u128 hole_bound() const { return expected_size_ ? *expected_size_ : high_water_; }

  std::map<u128, u128> received_;  // start -> end
  std::optional<u128> expected_size_;
  u128 high_water_ = 0;
  u128 received_bytes_ = 0;
};

}  // namespace saratoga::holes
