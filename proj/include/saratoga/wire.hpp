#pragma once

// Packet codec. The byte layout is documented in docs/wire-format.md; every
// multi-byte integer is big-endian.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "saratoga/byte_range.hpp"
#include "saratoga/expected.hpp"
#include "saratoga/uint128.hpp"

namespace saratoga::wire {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 8;
inline constexpr std::size_t kMaxPathBytes = 1024;
inline constexpr std::size_t kMaxDatagram = 65507;  // IPv4 UDP payload ceiling
inline constexpr std::size_t kDigestBytes = 32;

enum class DescriptorWidth : std::uint8_t { W16 = 0, W32 = 1, W64 = 2, W128 = 3 };

constexpr std::size_t width_bytes(DescriptorWidth w) {
  return std::size_t{2} << static_cast<unsigned>(w);
}
constexpr unsigned width_bits(DescriptorWidth w) {
  return static_cast<unsigned>(width_bytes(w) * 8);
}
/// Largest value representable at width w, i.e. 2^bits - 1.
constexpr u128 width_max(DescriptorWidth w) {
  return w == DescriptorWidth::W128 ? kU128Max : pow2(width_bits(w)) - 1;
}

/// Smallest width whose maximum value covers `size`.
DescriptorWidth select_descriptor_width(u128 size);

/// True when [offset, offset + len) lies inside [0, 2^bits(w)).
bool range_fits_width(u128 offset, u128 len, DescriptorWidth w);

std::string_view to_string(DescriptorWidth w);

enum class PacketType : std::uint8_t { Request = 1, Metadata = 2, Data = 3, Status = 4 };

namespace flag {
inline constexpr std::uint8_t kWidthMask = 0x03;
inline constexpr std::uint8_t kStreaming = 0x04;
inline constexpr std::uint8_t kEndOfData = 0x08;
inline constexpr std::uint8_t kStatusRequested = 0x10;
inline constexpr std::uint8_t kReservedMask = 0xE0;
}  // namespace flag

struct PacketHeader {
  std::uint32_t session_id = 0;
  DescriptorWidth width = DescriptorWidth::W16;
  bool streaming = false;
  bool end_of_data = false;
  bool status_requested = false;

  std::uint8_t flags() const;
  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

enum class Direction : std::uint8_t { Get = 0, Put = 1 };

struct Request {
  Direction direction = Direction::Get;
  std::string path;
  friend bool operator==(const Request&, const Request&) = default;
};

using Digest = std::array<std::uint8_t, kDigestBytes>;

/// transfer_size == kU128Max together with the streaming flag means
/// "unbounded".
struct Metadata {
  u128 transfer_size = 0;
  Digest digest{};
  std::string path;
  friend bool operator==(const Metadata&, const Metadata&) = default;
};

struct Data {
  u128 offset = 0;
  std::vector<std::uint8_t> payload;
  friend bool operator==(const Data&, const Data&) = default;
};

using Hole = ByteRange;

/// SNACK report. `progress` is the lowest byte not yet contiguously received;
/// completion is signalled by the end-of-data header flag.
struct Status {
  u128 progress = 0;
  std::vector<Hole> holes;
  friend bool operator==(const Status&, const Status&) = default;
};

using Body = std::variant<Request, Metadata, Data, Status>;

struct Packet {
  PacketHeader header;
  Body body;

  PacketType type() const { return static_cast<PacketType>(body.index() + 1); }
  friend bool operator==(const Packet&, const Packet&) = default;
};

struct WireConfig {
  std::size_t max_payload = 1452;
  std::size_t max_holes_per_status = 64;
};

enum class WireError {
  Truncated,
  BadVersion,
  UnknownType,
  MalformedHoles,
  OversizeField,
  InvalidField,
  LengthMismatch,
};

std::string_view to_string(WireError e);

/// Largest header-plus-descriptor overhead of any Data packet.
inline constexpr std::size_t kWorstCaseDataHeader = kHeaderBytes + 16;

bool config_valid(const WireConfig& cfg);

/// Checks every type invariant a decoded packet must satisfy.
Expected<std::monostate, WireError> validate(const Packet& p, const WireConfig& cfg);

Expected<std::vector<std::uint8_t>, WireError> encode_packet(const Packet& p,
                                                             const WireConfig& cfg);

Expected<Packet, WireError> decode_packet(std::span<const std::uint8_t> bytes,
                                          const WireConfig& cfg);

/// Encoded size without building the buffer.
std::size_t encoded_size(const Packet& p);

}  // namespace saratoga::wire
