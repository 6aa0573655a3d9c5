#include "saratoga/holes.hpp"

namespace saratoga::holes {

MarkResult HoleTracker::mark_received(u128 offset, u128 len) {
  if (len == 0) return MarkResult::EmptyRange;
  // End must stay representable.
  if (offset > kU128Max - len) return MarkResult::Overflow;
  u128 start = offset;
  u128 end = offset + len;
  if (expected_size_ && end > *expected_size_) return MarkResult::RangeBeyondEnd;

  // First range that could touch [start, end): the one starting at or before
  // start, if it reaches start.
  auto it = received_.upper_bound(start);
  if (it != received_.begin()) {
    auto prev = std::prev(it);
    if (prev->second >= start) it = prev;
  }
  while (it != received_.end() && it->first <= end) {
    start = std::min(start, it->first);
    end = std::max(end, it->second);
    received_bytes_ -= it->second - it->first;
    it = received_.erase(it);
  }
  received_.emplace_hint(it, start, end);
  received_bytes_ += end - start;
  high_water_ = std::max(high_water_, end);
  return MarkResult::Ok;
}

std::vector<ByteRange> HoleTracker::hole_list(std::size_t max) const {
  std::vector<ByteRange> out;
  const u128 bound = hole_bound();
  u128 cursor = 0;
  for (const auto& [s, e] : received_) {
    if (out.size() >= max || cursor >= bound) return out;
    if (s > cursor) out.push_back({cursor, std::min(s, bound)});
    cursor = e;
  }
  if (out.size() < max && cursor < bound) out.push_back({cursor, bound});
  return out;
}

std::vector<ByteRange> HoleTracker::missing_within(ByteRange r) const {
  std::vector<ByteRange> out;
  if (r.empty()) return out;
  u128 cursor = r.start;
  auto it = received_.upper_bound(r.start);
  if (it != received_.begin()) {
    auto prev = std::prev(it);
    if (prev->second > r.start) it = prev;
  }
  for (; it != received_.end() && it->first < r.end; ++it) {
    if (it->first > cursor) out.push_back({cursor, it->first});
    cursor = std::max(cursor, it->second);
    if (cursor >= r.end) return out;
  }
  if (cursor < r.end) out.push_back({cursor, r.end});
  return out;
}

bool HoleTracker::is_complete() const {
  if (!expected_size_) return false;
  if (*expected_size_ == 0) return true;
  return received_.size() == 1 && received_.begin()->first == 0 &&
         received_.begin()->second == *expected_size_;
}

u128 HoleTracker::progress() const {
  if (received_.empty() || received_.begin()->first != 0) return 0;
  return received_.begin()->second;
}

bool HoleTracker::set_expected_size(u128 size) {
  if (high_water_ > size) return false;
  expected_size_ = size;
  return true;
}

std::vector<ByteRange> HoleTracker::received_ranges() const {
  std::vector<ByteRange> out;
  out.reserve(received_.size());
  for (const auto& [s, e] : received_) out.push_back({s, e});
  return out;
}

bool HoleTracker::contains(u128 offset) const {
  auto it = received_.upper_bound(offset);
  if (it == received_.begin()) return false;
  --it;
  return offset < it->second;
}

}  // namespace saratoga::holes
