#include "saratoga/wire.hpp"

#include <algorithm>

namespace saratoga::wire {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  // Writes the low `nbytes` bytes of v, most significant first.
  void uint(u128 v, std::size_t nbytes) {
    for (std::size_t i = nbytes; i-- > 0;) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(std::string_view s) {
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  bool has(std::size_t n) const { return remaining() >= n; }

  std::uint8_t u8() { return in_[pos_++]; }
  std::uint16_t u16() {
    const auto v = static_cast<std::uint16_t>((in_[pos_] << 8) | in_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  u128 uint(std::size_t nbytes) {
    u128 v = 0;
    for (std::size_t i = 0; i < nbytes; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMinForLength[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLength[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

Expected<std::monostate, WireError> check_path(std::string_view path) {
  if (path.size() > kMaxPathBytes) return unexpected(WireError::OversizeField);
  if (!valid_utf8(path)) return unexpected(WireError::InvalidField);
  return std::monostate{};
}

std::size_t body_size(const Packet& p) {
  const std::size_t w = width_bytes(p.header.width);
  return std::visit(
      [&](const auto& b) -> std::size_t {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Request>) {
          return 1 + 2 + b.path.size();
        } else if constexpr (std::is_same_v<T, Metadata>) {
          return 16 + kDigestBytes + 2 + b.path.size();
        } else if constexpr (std::is_same_v<T, Data>) {
          return w + b.payload.size();
        } else {
          return w + 2 + b.holes.size() * 2 * w;
        }
      },
      p.body);
}

}  // namespace

DescriptorWidth select_descriptor_width(u128 size) {
  for (auto w : {DescriptorWidth::W16, DescriptorWidth::W32, DescriptorWidth::W64}) {
    if (size <= width_max(w)) return w;
  }
  return DescriptorWidth::W128;
}

bool range_fits_width(u128 offset, u128 len, DescriptorWidth w) {
  if (w == DescriptorWidth::W128) {
    // offset + len <= 2^128 without forming 2^128.
    return len == 0 || offset <= kU128Max - (len - 1);
  }
  const u128 limit = pow2(width_bits(w));
  return offset <= limit && len <= limit - offset;
}

std::string_view to_string(DescriptorWidth w) {
  switch (w) {
    case DescriptorWidth::W16: return "W16";
    case DescriptorWidth::W32: return "W32";
    case DescriptorWidth::W64: return "W64";
    case DescriptorWidth::W128: return "W128";
  }
  return "?";
}

std::string_view to_string(WireError e) {
  switch (e) {
    case WireError::Truncated: return "Truncated";
    case WireError::BadVersion: return "BadVersion";
    case WireError::UnknownType: return "UnknownType";
    case WireError::MalformedHoles: return "MalformedHoles";
    case WireError::OversizeField: return "OversizeField";
    case WireError::InvalidField: return "InvalidField";
    case WireError::LengthMismatch: return "LengthMismatch";
  }
  return "?";
}

std::uint8_t PacketHeader::flags() const {
  std::uint8_t f = static_cast<std::uint8_t>(width);
  if (streaming) f |= flag::kStreaming;
  if (end_of_data) f |= flag::kEndOfData;
  if (status_requested) f |= flag::kStatusRequested;
  return f;
}

bool config_valid(const WireConfig& cfg) {
  if (cfg.max_payload < 1 || cfg.max_payload + kWorstCaseDataHeader > kMaxDatagram) return false;
  if (cfg.max_holes_per_status < 1 || cfg.max_holes_per_status > 0xFFFF) return false;
  // Worst-case Status: W128 progress, count, and 32 bytes per hole.
  return kHeaderBytes + 16 + 2 + cfg.max_holes_per_status * 32 <= kMaxDatagram;
}

Expected<std::monostate, WireError> validate(const Packet& p, const WireConfig& cfg) {
  const DescriptorWidth w = p.header.width;
  const u128 wmax = width_max(w);
  auto result = std::visit(
      [&](const auto& b) -> Expected<std::monostate, WireError> {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Request>) {
          if (b.direction != Direction::Get && b.direction != Direction::Put) {
            return unexpected(WireError::InvalidField);
          }
          return check_path(b.path);
        } else if constexpr (std::is_same_v<T, Metadata>) {
          if (p.header.streaming) {
            if (b.transfer_size != kU128Max) return unexpected(WireError::InvalidField);
          } else if (b.transfer_size > wmax) {
            return unexpected(WireError::InvalidField);
          }
          return check_path(b.path);
        } else if constexpr (std::is_same_v<T, Data>) {
          if (b.payload.size() > cfg.max_payload) return unexpected(WireError::OversizeField);
          if (!range_fits_width(b.offset, b.payload.size(), w)) {
            return unexpected(WireError::InvalidField);
          }
          return std::monostate{};
        } else {
          if (b.holes.size() > cfg.max_holes_per_status) return unexpected(WireError::OversizeField);
          if (b.progress > wmax) return unexpected(WireError::InvalidField);
          for (std::size_t i = 0; i < b.holes.size(); ++i) {
            const Hole& h = b.holes[i];
            if (h.start >= h.end) return unexpected(WireError::MalformedHoles);
            if (i > 0 && b.holes[i - 1].end > h.start) return unexpected(WireError::MalformedHoles);
            if (h.end > wmax) return unexpected(WireError::InvalidField);
          }
          return std::monostate{};
        }
      },
      p.body);
  if (!result) return result;
  if (kHeaderBytes + body_size(p) > kMaxDatagram) return unexpected(WireError::OversizeField);
  return std::monostate{};
}

std::size_t encoded_size(const Packet& p) { return kHeaderBytes + body_size(p); }

Expected<std::vector<std::uint8_t>, WireError> encode_packet(const Packet& p,
                                                             const WireConfig& cfg) {
  if (auto ok = validate(p, cfg); !ok) return unexpected(ok.error());

  const std::size_t body = body_size(p);
  const std::size_t w = width_bytes(p.header.width);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + body);
  Writer wr(out);
  wr.u8(static_cast<std::uint8_t>((kVersion << 4) | static_cast<std::uint8_t>(p.type())));
  wr.u8(p.header.flags());
  wr.u32(p.header.session_id);
  wr.u16(static_cast<std::uint16_t>(body));

  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Request>) {
          wr.u8(static_cast<std::uint8_t>(b.direction));
          wr.str(b.path);
        } else if constexpr (std::is_same_v<T, Metadata>) {
          wr.uint(b.transfer_size, 16);
          wr.bytes(b.digest);
          wr.str(b.path);
        } else if constexpr (std::is_same_v<T, Data>) {
          wr.uint(b.offset, w);
          wr.bytes(b.payload);
        } else {
          wr.uint(b.progress, w);
          wr.u16(static_cast<std::uint16_t>(b.holes.size()));
          for (const Hole& h : b.holes) {
            wr.uint(h.start, w);
            wr.uint(h.end, w);
          }
        }
      },
      p.body);
  return out;
}

Expected<Packet, WireError> decode_packet(std::span<const std::uint8_t> bytes,
                                          const WireConfig& cfg) {
  Reader rd(bytes);
  if (!rd.has(kHeaderBytes)) return unexpected(WireError::Truncated);

  const std::uint8_t vt = rd.u8();
  if ((vt >> 4) != kVersion) return unexpected(WireError::BadVersion);
  const std::uint8_t ptype = vt & 0x0F;
  if (ptype < 1 || ptype > 4) return unexpected(WireError::UnknownType);

  const std::uint8_t flags = rd.u8();
  Packet p;
  p.header.session_id = rd.u32();
  p.header.width = static_cast<DescriptorWidth>(flags & flag::kWidthMask);
  p.header.streaming = (flags & flag::kStreaming) != 0;
  p.header.end_of_data = (flags & flag::kEndOfData) != 0;
  p.header.status_requested = (flags & flag::kStatusRequested) != 0;
  // Reserved bits are ignored.

  const std::size_t body_len = rd.u16();
  if (rd.remaining() < body_len) return unexpected(WireError::Truncated);
  if (rd.remaining() > body_len) return unexpected(WireError::LengthMismatch);

  const std::size_t w = width_bytes(p.header.width);
  auto read_path = [&](std::string& out) -> Expected<std::monostate, WireError> {
    if (!rd.has(2)) return unexpected(WireError::Truncated);
    const std::size_t n = rd.u16();
    if (n > kMaxPathBytes) return unexpected(WireError::OversizeField);
    if (!rd.has(n)) return unexpected(WireError::Truncated);
    auto s = rd.take(n);
    out.assign(s.begin(), s.end());
    return std::monostate{};
  };

  switch (static_cast<PacketType>(ptype)) {
    case PacketType::Request: {
      Request r;
      if (!rd.has(1)) return unexpected(WireError::Truncated);
      const std::uint8_t dir = rd.u8();
      if (dir > 1) return unexpected(WireError::InvalidField);
      r.direction = static_cast<Direction>(dir);
      if (auto ok = read_path(r.path); !ok) return unexpected(ok.error());
      p.body = std::move(r);
      break;
    }
    case PacketType::Metadata: {
      Metadata m;
      if (!rd.has(16 + kDigestBytes)) return unexpected(WireError::Truncated);
      m.transfer_size = rd.uint(16);
      auto d = rd.take(kDigestBytes);
      std::copy(d.begin(), d.end(), m.digest.begin());
      if (auto ok = read_path(m.path); !ok) return unexpected(ok.error());
      p.body = std::move(m);
      break;
    }
    case PacketType::Data: {
      Data d;
      if (!rd.has(w)) return unexpected(WireError::Truncated);
      d.offset = rd.uint(w);
      if (rd.remaining() > cfg.max_payload) return unexpected(WireError::OversizeField);
      auto payload = rd.take(rd.remaining());
      d.payload.assign(payload.begin(), payload.end());
      p.body = std::move(d);
      break;
    }
    case PacketType::Status: {
      Status s;
      if (!rd.has(w + 2)) return unexpected(WireError::Truncated);
      s.progress = rd.uint(w);
      const std::size_t count = rd.u16();
      if (count > cfg.max_holes_per_status) return unexpected(WireError::OversizeField);
      if (!rd.has(count * 2 * w)) return unexpected(WireError::Truncated);
      s.holes.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        Hole h;
        h.start = rd.uint(w);
        h.end = rd.uint(w);
        s.holes.push_back(h);
      }
      p.body = std::move(s);
      break;
    }
  }
  if (rd.remaining() != 0) return unexpected(WireError::LengthMismatch);
  if (auto ok = validate(p, cfg); !ok) return unexpected(ok.error());
  return p;
}

}  // namespace saratoga::wire
