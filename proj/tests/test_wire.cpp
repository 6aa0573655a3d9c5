#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "packet_gen.hpp"
#include "saratoga/wire.hpp"

using namespace saratoga;
using namespace saratoga::wire;

namespace {

std::vector<std::uint8_t> read_hex_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::vector<std::uint8_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
  }
  return out;
}

Packet data_packet(std::uint32_t sid, DescriptorWidth w, u128 off, std::string_view payload) {
  PacketHeader h;
  h.session_id = sid;
  h.width = w;
  return Packet{h, Data{off, std::vector<std::uint8_t>(payload.begin(), payload.end())}};
}

std::map<std::string, Packet> golden_packets() {
  std::map<std::string, Packet> m;
  m["data_w16_ab"] = data_packet(1, DescriptorWidth::W16, 0, "ab");
  m["data_reserved_bits"] = m["data_w16_ab"];
  {
    PacketHeader h;
    h.session_id = 0x01020304;
    m["request_put"] = Packet{h, Request{Direction::Put, "a.txt"}};
  }
  {
    PacketHeader h;
    h.session_id = 7;
    h.width = DescriptorWidth::W32;
    Metadata md;
    md.transfer_size = 70000;
    for (std::size_t i = 0; i < md.digest.size(); ++i) md.digest[i] = static_cast<std::uint8_t>(i);
    md.path = "f";
    m["metadata_w32"] = Packet{h, md};
  }
  {
    PacketHeader h;
    h.session_id = 9;
    h.width = DescriptorWidth::W64;
    h.streaming = true;
    Metadata md;
    md.transfer_size = kU128Max;
    m["metadata_stream"] = Packet{h, md};
  }
  {
    PacketHeader h;
    h.session_id = 1;
    m["status_w16_one_hole"] = Packet{h, Status{1000, {{1000, 2000}}}};
  }
  {
    PacketHeader h;
    h.session_id = 0xdeadbeef;
    h.width = DescriptorWidth::W32;
    h.end_of_data = true;
    m["status_w32_complete"] = Packet{h, Status{70000, {}}};
  }
  {
    Packet p = data_packet(2, DescriptorWidth::W128, kU128Max - 1, "z");
    p.header.end_of_data = true;
    p.header.status_requested = true;
    m["data_w128_top"] = p;
  }
  {
    Packet p = data_packet(3, DescriptorWidth::W64, pow2(32), "");
    p.header.status_requested = true;
    m["data_w64_poll"] = p;
  }
  return m;
}

}  // namespace

TEST_CASE("golden vectors decode to their packets and canonical ones re-encode exactly") {
  const auto packets = golden_packets();
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(SARATOGA_VECTOR_DIR)) {
    if (entry.path().extension() != ".hex") continue;
    const std::string name = entry.path().stem().string();
    CAPTURE(name);
    auto it = packets.find(name);
    REQUIRE(it != packets.end());
    const auto bytes = read_hex_file(entry.path());
    auto decoded = decode_packet(bytes, WireConfig{});
    REQUIRE(decoded);
    CHECK(*decoded == it->second);
    if (name != "data_reserved_bits") {
      auto encoded = encode_packet(it->second, WireConfig{});
      REQUIRE(encoded);
      CHECK(*encoded == bytes);
      CHECK(encoded_size(it->second) == bytes.size());
    }
    ++seen;
  }
  CHECK(seen == packets.size());
}

TEST_CASE("small Data packet layout") {
  auto bytes = encode_packet(data_packet(1, DescriptorWidth::W16, 0, "ab"), WireConfig{});
  REQUIRE(bytes);
  REQUIRE(bytes->size() == 12);
  CHECK((*bytes)[0] == 0x13);
  CHECK(std::vector<std::uint8_t>(bytes->end() - 4, bytes->end()) ==
        std::vector<std::uint8_t>{0x00, 0x00, 0x61, 0x62});
}

TEST_CASE("descriptor width selection") {
  CHECK(select_descriptor_width(0) == DescriptorWidth::W16);
  CHECK(select_descriptor_width(65535) == DescriptorWidth::W16);
  CHECK(select_descriptor_width(65536) == DescriptorWidth::W32);
  CHECK(select_descriptor_width(pow2(32) - 1) == DescriptorWidth::W32);
  CHECK(select_descriptor_width(pow2(32)) == DescriptorWidth::W64);
  CHECK(select_descriptor_width(pow2(64) - 1) == DescriptorWidth::W64);
  CHECK(select_descriptor_width(pow2(64)) == DescriptorWidth::W128);
  CHECK(select_descriptor_width(kU128Max) == DescriptorWidth::W128);
}

TEST_CASE("range_fits_width at the top of each width") {
  CHECK(range_fits_width(65535, 1, DescriptorWidth::W16));
  CHECK_FALSE(range_fits_width(65535, 2, DescriptorWidth::W16));
  CHECK(range_fits_width(kU128Max, 1, DescriptorWidth::W128));
  CHECK(range_fits_width(kU128Max - 10, 11, DescriptorWidth::W128));
  CHECK_FALSE(range_fits_width(kU128Max, 2, DescriptorWidth::W128));
}

TEST_CASE("Status hole roundtrip") {
  PacketHeader h;
  h.session_id = 5;
  const Packet p{h, Status{1000, {{1000, 2000}}}};
  auto bytes = encode_packet(p, WireConfig{});
  REQUIRE(bytes);
  auto back = decode_packet(*bytes, WireConfig{});
  REQUIRE(back);
  CHECK(*back == p);
}

TEST_CASE("encode rejects oversize fields") {
  PacketHeader h;
  h.session_id = 1;
  h.width = DescriptorWidth::W32;
  Status st;
  for (u128 i = 0; i < 65; ++i) st.holes.push_back({i * 10, i * 10 + 5});
  auto r = encode_packet(Packet{h, st}, WireConfig{});
  REQUIRE_FALSE(r);
  CHECK(r.error() == WireError::OversizeField);

  st.holes.pop_back();
  CHECK(encode_packet(Packet{h, st}, WireConfig{}));

  auto long_path = encode_packet(Packet{h, Request{Direction::Get, std::string(1025, 'a')}}, {});
  REQUIRE_FALSE(long_path);
  CHECK(long_path.error() == WireError::OversizeField);
  CHECK(encode_packet(Packet{h, Request{Direction::Get, std::string(1024, 'a')}}, {}));

  auto big = encode_packet(data_packet(1, DescriptorWidth::W32, 0, std::string(1453, 'x')), {});
  REQUIRE_FALSE(big);
  CHECK(big.error() == WireError::OversizeField);
}

TEST_CASE("encode rejects invariant violations") {
  // Offset plus length beyond the width.
  auto r = encode_packet(data_packet(1, DescriptorWidth::W16, 65535, "ab"), {});
  REQUIRE_FALSE(r);
  CHECK(r.error() == WireError::InvalidField);

  PacketHeader h;
  h.session_id = 1;
  auto overlap = encode_packet(Packet{h, Status{0, {{10, 20}, {15, 30}}}}, {});
  REQUIRE_FALSE(overlap);
  CHECK(overlap.error() == WireError::MalformedHoles);

  auto bad_utf8 = encode_packet(Packet{h, Request{Direction::Put, "\xC3\x28"}}, {});
  REQUIRE_FALSE(bad_utf8);
  CHECK(bad_utf8.error() == WireError::InvalidField);
}

TEST_CASE("decode error kinds") {
  const std::vector<std::uint8_t> good{0x13, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00,
                                       0x04, 0x00, 0x00, 0x61, 0x62};
  auto err = [](std::vector<std::uint8_t> b) {
    auto r = decode_packet(b, WireConfig{});
    REQUIRE_FALSE(r);
    return r.error();
  };
  CHECK(err({}) == WireError::Truncated);
  CHECK(err({0x13, 0x00, 0x00}) == WireError::Truncated);

  auto v = good;
  v[0] = 0x23;
  CHECK(err(v) == WireError::BadVersion);
  v = good;
  v[0] = 0x15;
  CHECK(err(v) == WireError::UnknownType);
  v = good;
  v[0] = 0x10;
  CHECK(err(v) == WireError::UnknownType);

  v = good;
  v.pop_back();
  CHECK(err(v) == WireError::Truncated);
  v = good;
  v.push_back(0);
  CHECK(err(v) == WireError::LengthMismatch);

  // Status with holes out of order.
  const std::vector<std::uint8_t> unsorted{0x14, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x0c, 0x00,
                                           0x00, 0x00, 0x02, 0x00, 0x14, 0x00, 0x1e, 0x00, 0x0a,
                                           0x00, 0x0f};
  CHECK(err(unsorted) == WireError::MalformedHoles);
  // Empty hole.
  const std::vector<std::uint8_t> empty_hole{0x14, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x08,
                                             0x00, 0x00, 0x00, 0x01, 0x00, 0x05, 0x00, 0x05};
  CHECK(err(empty_hole) == WireError::MalformedHoles);
}

TEST_CASE("reserved flag bits are ignored on decode and zero on encode") {
  std::vector<std::uint8_t> bytes{0x13, 0x80, 0x00, 0x00, 0x00, 0x01, 0x00,
                                  0x04, 0x00, 0x00, 0x61, 0x62};
  auto p = decode_packet(bytes, WireConfig{});
  REQUIRE(p);
  CHECK(*p == data_packet(1, DescriptorWidth::W16, 0, "ab"));
  auto again = encode_packet(*p, WireConfig{});
  REQUIRE(again);
  CHECK(((*again)[1] & flag::kReservedMask) == 0);
}

TEST_CASE("streaming Metadata must declare the unbounded size") {
  PacketHeader h;
  h.session_id = 1;
  h.streaming = true;
  h.width = DescriptorWidth::W64;
  Metadata md;
  md.transfer_size = 1000;
  auto r = encode_packet(Packet{h, md}, {});
  REQUIRE_FALSE(r);
  CHECK(r.error() == WireError::InvalidField);
}

TEST_CASE("10^4 generated packets roundtrip bit-exactly") {
  std::mt19937_64 rng(0x5EED);
  const WireConfig cfg{};
  for (int i = 0; i < 10000; ++i) {
    const Packet p = testgen::random_packet(rng, cfg);
    auto bytes = encode_packet(p, cfg);
    REQUIRE(bytes);
    CHECK(bytes->size() == encoded_size(p));
    auto back = decode_packet(*bytes, cfg);
    REQUIRE(back);
    REQUIRE(*back == p);
    auto again = encode_packet(*back, cfg);
    REQUIRE(again);
    REQUIRE(*again == *bytes);
  }
}

TEST_CASE("10^5 fuzzed inputs never yield an invariant-violating packet") {
  std::mt19937_64 rng(0xF022);
  const WireConfig cfg{};
  std::size_t accepted = 0;
  for (int i = 0; i < 100000; ++i) {
    std::vector<std::uint8_t> buf;
    if (i % 2 == 0) {
      buf.resize(rng() % 96);
      for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
      // Bias toward plausible headers so bodies get exercised.
      if (buf.size() >= 8 && i % 4 == 0) {
        buf[0] = static_cast<std::uint8_t>(0x10 | (1 + rng() % 4));
        const auto body = buf.size() - 8;
        buf[6] = static_cast<std::uint8_t>(body >> 8);
        buf[7] = static_cast<std::uint8_t>(body);
      }
    } else {
      buf = *encode_packet(testgen::random_packet(rng, cfg), cfg);
      const int mutations = 1 + static_cast<int>(rng() % 4);
      for (int m = 0; m < mutations; ++m) {
        switch (rng() % 4) {
          case 0:
            if (!buf.empty()) buf[rng() % buf.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            break;
          case 1:
            buf.resize(rng() % (buf.size() + 1));
            break;
          case 2:
            buf.push_back(static_cast<std::uint8_t>(rng()));
            break;
          default:
            if (!buf.empty()) buf[rng() % buf.size()] = static_cast<std::uint8_t>(rng());
            break;
        }
      }
    }
    // Exact-size heap copy so a sanitizer build flags any over-read.
    std::vector<std::uint8_t> exact(buf.begin(), buf.end());
    auto p = decode_packet(exact, cfg);
    if (!p) continue;
    ++accepted;
    REQUIRE(validate(*p, cfg));
    auto re = encode_packet(*p, cfg);
    REQUIRE(re);
    auto back = decode_packet(*re, cfg);
    REQUIRE(back);
    REQUIRE(*back == *p);
  }
  CHECK(accepted > 1000);
}
