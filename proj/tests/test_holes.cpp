#include <doctest.h>

#include <algorithm>
#include <random>

#include "saratoga/holes.hpp"

using namespace saratoga;
using holes::HoleTracker;
using holes::MarkResult;

namespace {

using Ranges = std::vector<ByteRange>;

// Bitmap reference for spaces small enough to enumerate.
struct BitmapOracle {
  std::vector<bool> bits;
  bool bounded;
  std::size_t high = 0;

  explicit BitmapOracle(std::size_t space, bool bounded_size) : bits(space), bounded(bounded_size) {}

  MarkResult mark(std::size_t off, std::size_t len) {
    if (len == 0) return MarkResult::EmptyRange;
    if (bounded && off + len > bits.size()) return MarkResult::RangeBeyondEnd;
    for (std::size_t i = off; i < off + len; ++i) bits[i] = true;
    high = std::max(high, off + len);
    return MarkResult::Ok;
  }

  Ranges runs(bool value, std::size_t limit) const {
    Ranges out;
    std::size_t i = 0;
    while (i < limit) {
      if (bits[i] != value) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < limit && bits[j] == value) ++j;
      out.push_back({i, j});
      i = j;
    }
    return out;
  }

  Ranges received() const { return runs(true, bits.size()); }
  Ranges holes() const { return runs(false, bounded ? bits.size() : high); }
  bool complete() const {
    return bounded && std::all_of(bits.begin(), bits.end(), [](bool b) { return b; });
  }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }
};

void check_against(const HoleTracker& t, const BitmapOracle& o) {
  REQUIRE(t.received_ranges() == o.received());
  REQUIRE(t.hole_list(SIZE_MAX) == o.holes());
  REQUIRE(t.is_complete() == o.complete());
  REQUIRE(t.received_bytes() == o.count());
}

}  // namespace

TEST_CASE("two marks leave the middle hole") {
  HoleTracker t(3000);
  CHECK(t.mark_received(0, 1000) == MarkResult::Ok);
  CHECK(t.mark_received(2000, 1000) == MarkResult::Ok);
  CHECK(t.hole_list(64) == Ranges{{1000, 2000}});
  CHECK_FALSE(t.is_complete());
  CHECK(t.progress() == 1000);
}

TEST_CASE("overlapping marks merge") {
  HoleTracker t(100);
  t.mark_received(0, 50);
  t.mark_received(25, 50);
  CHECK(t.received_ranges() == Ranges{{0, 75}});
  CHECK(t.hole_list(64) == Ranges{{75, 100}});
  CHECK(t.received_bytes() == 75);
}

TEST_CASE("fresh tracker is one hole") {
  HoleTracker t(10);
  CHECK(t.hole_list(64) == Ranges{{0, 10}});
  CHECK(t.progress() == 0);
}

TEST_CASE("hole list is truncated to max") {
  HoleTracker t(200);
  for (u128 i = 0; i < 100; ++i) t.mark_received(2 * i + 1, 1);
  const auto all = t.hole_list(1000);
  REQUIRE(all.size() == 100);
  const auto first = t.hole_list(64);
  REQUIRE(first.size() == 64);
  CHECK(std::equal(first.begin(), first.end(), all.begin()));
  CHECK(first.back() == ByteRange{126, 127});
}

TEST_CASE("zero size is complete at once") {
  HoleTracker t(0);
  CHECK(t.is_complete());
  CHECK(t.hole_list(64).empty());
}

TEST_CASE("streaming tracker") {
  HoleTracker t;
  CHECK_FALSE(t.is_complete());
  CHECK(t.hole_list(64).empty());
  t.mark_received(100, 50);
  CHECK(t.hole_list(64) == Ranges{{0, 100}});
  t.mark_received(0, 100);
  CHECK(t.hole_list(64).empty());
  CHECK_FALSE(t.is_complete());
  CHECK(t.progress() == 150);

  CHECK_FALSE(t.set_expected_size(149));
  CHECK(t.set_expected_size(150));
  CHECK(t.is_complete());
}

TEST_CASE("mark result codes") {
  HoleTracker t(100);
  CHECK(t.mark_received(10, 0) == MarkResult::EmptyRange);
  CHECK(t.mark_received(90, 11) == MarkResult::RangeBeyondEnd);
  CHECK(t.mark_received(90, 10) == MarkResult::Ok);
  HoleTracker s;
  CHECK(s.mark_received(kU128Max, 1) == MarkResult::Overflow);
  CHECK(s.mark_received(kU128Max - 1, 1) == MarkResult::Ok);
  CHECK(t.received_bytes() == 10);
}

TEST_CASE("duplicates are idempotent") {
  HoleTracker t(1000);
  t.mark_received(100, 200);
  const auto before = t.received_ranges();
  t.mark_received(100, 200);
  t.mark_received(150, 50);
  CHECK(t.received_ranges() == before);
  CHECK(t.received_bytes() == 200);
}

TEST_CASE("adjacent ranges coalesce") {
  HoleTracker t(30);
  t.mark_received(0, 10);
  t.mark_received(20, 10);
  CHECK(t.range_count() == 2);
  t.mark_received(10, 10);
  CHECK(t.range_count() == 1);
  CHECK(t.is_complete());
}

TEST_CASE("missing_within") {
  HoleTracker t(100);
  t.mark_received(10, 10);
  t.mark_received(30, 10);
  CHECK(t.missing_within({0, 100}) == Ranges{{0, 10}, {20, 30}, {40, 100}});
  CHECK(t.missing_within({15, 35}) == Ranges{{20, 30}});
  CHECK(t.missing_within({10, 20}).empty());
  CHECK(t.missing_within({5, 5}).empty());
}

TEST_CASE("arrival order does not change the final state") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 1 + rng() % 5000;
    std::vector<ByteRange> chunks;
    for (std::size_t off = 0; off < size;) {
      const std::size_t len = std::min<std::size_t>(size - off, 1 + rng() % 300);
      chunks.push_back({off, off + len});
      off += len;
    }
    // Some duplicates and overlaps.
    for (int i = 0; i < 5; ++i) {
      const std::size_t a = rng() % size;
      chunks.push_back({a, a + 1 + rng() % (size - a)});
    }
    HoleTracker sorted(size);
    for (const auto& c : chunks) sorted.mark_received(c.start, c.length());
    std::shuffle(chunks.begin(), chunks.end(), rng);
    HoleTracker shuffled(size);
    for (const auto& c : chunks) shuffled.mark_received(c.start, c.length());
    REQUIRE(sorted.is_complete());
    REQUIRE(shuffled.is_complete());
    REQUIRE(sorted.received_ranges() == shuffled.received_ranges());
  }
}

TEST_CASE("10^4 random operation sequences match a bitmap") {
  std::mt19937_64 rng(0xB17);
  for (int seq = 0; seq < 10000; ++seq) {
    const bool bounded = seq % 5 != 0;
    // Mostly small spaces, some up to 64 KiB.
    const std::size_t space = seq % 50 == 0 ? rng() % 65537 : rng() % 2049;
    HoleTracker t = bounded ? HoleTracker(space) : HoleTracker();
    BitmapOracle o(space, bounded);
    const int ops = static_cast<int>(rng() % 40);
    for (int i = 0; i < ops; ++i) {
      if (space == 0) {
        REQUIRE(t.mark_received(0, 0) == MarkResult::EmptyRange);
        continue;
      }
      const std::size_t off = rng() % space;
      std::size_t len = rng() % 8 == 0 ? 0 : 1 + rng() % std::max<std::size_t>(1, space / 4);
      // Unbounded oracles cannot represent bytes past the space.
      if (!bounded) len = std::min(len, space - off);
      REQUIRE(t.mark_received(off, len) == o.mark(off, len));
      if (rng() % 8 == 0) check_against(t, o);
    }
    check_against(t, o);
    CHECK(t.progress() == (o.received().empty() || o.received()[0].start != 0
                               ? 0
                               : static_cast<std::size_t>(o.received()[0].end)));
  }
}

TEST_CASE("hole arithmetic near width boundaries") {
  const u128 points[] = {pow2(16), pow2(32), pow2(64), kU128Max};
  for (const u128 p : points) {
    CAPTURE(to_string(p));
    HoleTracker t;
    t.mark_received(p - 10, 5);
    t.mark_received(p - 3, 2);
    CHECK(t.hole_list(64) == Ranges{{0, p - 10}, {p - 5, p - 3}});
    CHECK(t.high_water() == p - 1);
    CHECK(t.missing_within({p - 12, p - 1}) == Ranges{{p - 12, p - 10}, {p - 5, p - 3}});
    t.mark_received(p - 5, 2);
    CHECK(t.received_ranges() == Ranges{{p - 10, p - 1}});
    CHECK(t.received_bytes() == 9);
  }
}
