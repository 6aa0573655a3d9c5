#include <algorithm>
#include <cstring>

#include "saratoga/session.hpp"

namespace saratoga::session {

std::string_view to_string(TransferMode m) {
  return m == TransferMode::File ? "file" : "stream";
}

std::string_view to_string(TimerId t) {
  switch (t) {
    case TimerId::Idle: return "Idle";
    case TimerId::Poll: return "Poll";
    case TimerId::StatusTick: return "StatusTick";
    case TimerId::Linger: return "Linger";
  }
  return "?";
}

std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::IdleTimeout: return "IdleTimeout";
    case FailureReason::ProtocolViolation: return "ProtocolViolation";
    case FailureReason::DigestMismatch: return "DigestMismatch";
    case FailureReason::SourceOverrun: return "SourceOverrun";
    case FailureReason::MaxDuration: return "MaxDuration";
  }
  return "?";
}

std::string_view to_string(SenderState s) {
  switch (s) {
    case SenderState::AwaitingRequest: return "AwaitingRequest";
    case SenderState::Transferring: return "Transferring";
    case SenderState::Draining: return "Draining";
    case SenderState::Done: return "Done";
    case SenderState::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(ReceiverState s) {
  switch (s) {
    case ReceiverState::AwaitingMetadata: return "AwaitingMetadata";
    case ReceiverState::Receiving: return "Receiving";
    case ReceiverState::Complete: return "Complete";
    case ReceiverState::Failed: return "Failed";
  }
  return "?";
}

TransferReport make_report(TransferMode mode, u128 unique, u128 retransmitted, double duration,
                           std::uint64_t status_packets, bool digest_ok, u128 gap_bytes) {
  TransferReport r;
  r.mode = mode;
  r.unique_bytes = unique;
  r.retransmitted_bytes = retransmitted;
  r.bytes_delivered = unique + retransmitted;
  r.duration = duration;
  r.goodput_bps = duration > 0 ? 8.0 * to_double(unique) / duration : 0.0;
  r.status_packets = status_packets;
  r.digest_ok = digest_ok;
  r.gap_bytes = gap_bytes;
  return r;
}

Time event_time(const Event& e) {
  return std::visit([](const auto& ev) { return ev.now; }, e);
}

bool config_valid(const SessionConfig& cfg) {
  return wire::config_valid(cfg.wire) && cfg.status_interval > 0 && cfg.max_idle > 0 &&
         cfg.linger >= 0 && cfg.stream_window > 0;
}

void MemorySource::read(u128 offset, std::span<std::uint8_t> out) const {
  const auto off = static_cast<std::size_t>(offset);
  std::memcpy(out.data(), bytes_.data() + off, out.size());
}

std::uint8_t PatternSource::at(u128 offset) const {
  std::uint64_t z = low64(offset) ^ (high64(offset) * 0x9E3779B97F4A7C15ULL) ^ seed_;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<std::uint8_t>(z);
}

void PatternSource::read(u128 offset, std::span<std::uint8_t> out) const {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(offset + i);
}

wire::Digest digest_of(const ByteSource& src) {
  Sha256 h;
  std::vector<std::uint8_t> chunk(1 << 16);
  const u128 size = src.size();
  for (u128 off = 0; off < size;) {
    const auto n = static_cast<std::size_t>(std::min<u128>(chunk.size(), size - off));
    src.read(off, std::span(chunk.data(), n));
    h.update(std::span(chunk.data(), n));
    off += n;
  }
  return h.finish();
}

}  // namespace saratoga::session
