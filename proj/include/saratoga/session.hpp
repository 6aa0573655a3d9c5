#pragma once

// Sender and receiver transfer state machines. Sessions never touch sockets,
// files, or clocks: each call consumes one timestamped event and returns the
// actions the harness must carry out.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "saratoga/byte_range.hpp"
#include "saratoga/digest.hpp"
#include "saratoga/holes.hpp"
#include "saratoga/rate.hpp"
#include "saratoga/uint128.hpp"
#include "saratoga/wire.hpp"

namespace saratoga::session {

using Time = double;  // seconds

enum class TransferMode { File, Stream };

enum class TimerId : std::uint8_t { Idle, Poll, StatusTick, Linger };

enum class FailureReason {
  IdleTimeout,
  ProtocolViolation,
  DigestMismatch,
  SourceOverrun,
  MaxDuration,
};

std::string_view to_string(TransferMode m);
std::string_view to_string(TimerId t);
std::string_view to_string(FailureReason r);

struct TransferReport {
  u128 bytes_delivered = 0;  // unique + retransmitted
  u128 unique_bytes = 0;
  u128 retransmitted_bytes = 0;
  double duration = 0.0;     // seconds
  double goodput_bps = 0.0;  // 8 * unique / duration
  std::uint64_t status_packets = 0;
  bool digest_ok = false;
  TransferMode mode = TransferMode::File;
  u128 gap_bytes = 0;  // stream mode: bytes abandoned as unrecoverable

  friend bool operator==(const TransferReport&, const TransferReport&) = default;
};

TransferReport make_report(TransferMode mode, u128 unique, u128 retransmitted, double duration,
                           std::uint64_t status_packets, bool digest_ok, u128 gap_bytes = 0);

namespace event {
struct PacketArrived {
  wire::Packet packet;
  Time now = 0;
};
struct TimerFired {
  TimerId id = TimerId::Idle;
  Time now = 0;
};
/// Stream sender only: new application bytes, optionally closing the stream.
struct StreamData {
  std::vector<std::uint8_t> bytes;
  bool end_of_stream = false;
  Time now = 0;
};
/// The outgoing interface can accept another data packet.
struct TransmitReady {
  Time now = 0;
};
}  // namespace event

using Event =
    std::variant<event::PacketArrived, event::TimerFired, event::StreamData, event::TransmitReady>;

Time event_time(const Event& e);

namespace action {
struct SendPacket {
  wire::Packet packet;
  Time earliest = 0;
};
/// Arms (or re-arms) the named timer; one deadline per id.
struct SetTimer {
  TimerId id = TimerId::Idle;
  Time deadline = 0;
};
struct WriteSink {
  u128 offset = 0;
  std::vector<std::uint8_t> bytes;
};
struct ReadSource {
  u128 offset = 0;
  std::size_t len = 0;
};
struct Finished {
  TransferReport report;
};
struct Abort {
  FailureReason reason = FailureReason::IdleTimeout;
  TransferReport report;
};
}  // namespace action

using Action = std::variant<action::SendPacket, action::SetTimer, action::WriteSink,
                            action::ReadSource, action::Finished, action::Abort>;

struct SessionConfig {
  wire::WireConfig wire;
  double status_interval = 0.2;
  double max_idle = 5.0;
  /// Receiver stays reachable this long after completion so a lost final
  /// Status can be re-requested.
  double linger = 1.0;
  u128 stream_window = 1u << 20;
  wire::DescriptorWidth stream_width = wire::DescriptorWidth::W64;
};

bool config_valid(const SessionConfig& cfg);

/// Random-access byte source for file-mode senders.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual u128 size() const = 0;
  virtual void read(u128 offset, std::span<std::uint8_t> out) const = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  u128 size() const override { return bytes_.size(); }
  void read(u128 offset, std::span<std::uint8_t> out) const override;
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Synthetic source of arbitrary size whose byte at offset o is a hash of o.
/// Used for sparse checks at huge offsets.
class PatternSource final : public ByteSource {
 public:
  PatternSource(u128 size, std::uint64_t seed) : size_(size), seed_(seed) {}
  u128 size() const override { return size_; }
  void read(u128 offset, std::span<std::uint8_t> out) const override;
  std::uint8_t at(u128 offset) const;

 private:
  u128 size_;
  std::uint64_t seed_;
};

/// SHA-256 of a whole source, read in chunks.
wire::Digest digest_of(const ByteSource& src);

enum class SenderState { AwaitingRequest, Transferring, Draining, Done, Failed };
enum class ReceiverState { AwaitingMetadata, Receiving, Complete, Failed };

std::string_view to_string(SenderState s);
std::string_view to_string(ReceiverState s);

struct SenderOptions {
  std::uint32_t session_id = 1;
  TransferMode mode = TransferMode::File;
  /// Put: the sender opens the transfer. Get: it waits for a Request.
  wire::Direction direction = wire::Direction::Put;
  std::string path;
  std::shared_ptr<const ByteSource> source;  // File mode
  wire::Digest digest{};                     // File mode, digest of `source`
  SessionConfig cfg;
};

class SenderSession {
 public:
  SenderSession(SenderOptions opts, rate::Pacer pacer);

  std::vector<Action> start(Time now);
  std::vector<Action> on_event(const Event& e);

  SenderState state() const { return state_; }
  bool terminated() const { return terminated_; }
  u128 cursor() const { return cursor_; }
  wire::DescriptorWidth width() const { return width_; }
  const std::deque<ByteRange>& retransmit_queue() const { return retransmit_; }
  const rate::Pacer& pacer() const { return pacer_; }
  TransferReport report(Time now) const;
  std::uint32_t session_id() const { return opts_.session_id; }
  const SessionConfig& config() const { return opts_.cfg; }

 private:
  struct SentRecord {
    u128 end;
    Time at;
  };

  void on_packet(const wire::Packet& p, Time now, std::vector<Action>& out);
  void on_status(const wire::Packet& p, Time now, std::vector<Action>& out);
  void on_timer(TimerId id, Time now, std::vector<Action>& out);
  void on_stream_data(const event::StreamData& d, std::vector<Action>& out);
  void transmit(Time now, std::vector<Action>& out);

  void send_opening(Time now, std::vector<Action>& out);
  void send_poll(Time now, std::vector<Action>& out);
  wire::PacketHeader header() const;
  void finish(Time now, std::vector<Action>& out);
  void fail(FailureReason why, Time now, std::vector<Action>& out);

  u128 data_end() const;  // one past the last byte currently available
  bool all_new_data_sent() const;
  void read_bytes(u128 offset, std::span<std::uint8_t> out) const;
  void record_send(ByteRange r, Time at);
  std::vector<ByteRange> eligible(const std::vector<ByteRange>& holes, Time now) const;
  double retransmit_guard() const;

  SenderOptions opts_;
  rate::Pacer pacer_;
  SenderState state_ = SenderState::AwaitingRequest;
  bool terminated_ = false;
  wire::DescriptorWidth width_;
  Time start_time_ = 0;
  Time last_heard_ = 0;
  Time last_solicit_ = -1e300;
  // Outstanding solicitations on data packets: (send time, end offset).
  std::deque<std::pair<Time, u128>> solicits_;
  std::optional<double> srtt_;
  std::optional<Time> last_loss_event_;
  bool heard_status_ = false;

  u128 cursor_ = 0;
  std::deque<ByteRange> retransmit_;
  std::map<u128, SentRecord> send_log_;
  std::deque<std::pair<Time, u128>> send_order_;
  holes::HoleTracker counted_lost_;
  std::uint64_t packets_since_feedback_ = 0;

  // Stream mode retention buffer: bytes [buffer_base_, appended_end_).
  std::deque<std::uint8_t> buffer_;
  u128 buffer_base_ = 0;
  u128 appended_end_ = 0;
  bool stream_closed_ = false;

  u128 unique_bytes_ = 0;
  u128 retransmitted_bytes_ = 0;
  std::uint64_t status_packets_ = 0;
};

struct ReceiverOptions {
  /// 0 adopts the session id of the first packet seen.
  std::uint32_t session_id = 0;
  /// Get: the receiver opens the transfer with a Request for `path`.
  wire::Direction direction = wire::Direction::Put;
  std::string path;
  SessionConfig cfg;
};

class ReceiverSession {
 public:
  explicit ReceiverSession(ReceiverOptions opts);

  std::vector<Action> start(Time now);
  std::vector<Action> on_event(const Event& e);

  ReceiverState state() const { return state_; }
  bool terminated() const { return terminated_; }
  TransferMode mode() const { return mode_; }
  const holes::HoleTracker& tracker() const { return tracker_; }
  std::uint32_t session_id() const { return session_id_; }
  const std::string& path() const { return path_; }
  std::optional<u128> transfer_size() const;
  TransferReport report() const;

 private:
  void on_packet(const wire::Packet& p, Time now, std::vector<Action>& out);
  void on_metadata(const wire::Packet& p, Time now, std::vector<Action>& out);
  void on_data(const wire::Packet& p, Time now, std::vector<Action>& out);
  void on_timer(TimerId id, Time now, std::vector<Action>& out);

  void accept(u128 offset, std::span<const std::uint8_t> bytes, std::vector<Action>& out);
  void drain(std::vector<Action>& out);
  void abandon_stale_holes(std::vector<Action>& out);
  void check_complete(Time now, std::vector<Action>& out);
  void send_status(Time now, std::vector<Action>& out);
  void fail(FailureReason why, std::vector<Action>& out);

  ReceiverOptions opts_;
  std::uint32_t session_id_ = 0;
  ReceiverState state_ = ReceiverState::AwaitingMetadata;
  bool terminated_ = false;
  TransferMode mode_ = TransferMode::File;
  wire::DescriptorWidth width_ = wire::DescriptorWidth::W16;
  wire::Digest expected_digest_{};
  std::string path_;
  holes::HoleTracker tracker_;

  // In-order consumption: the digest (file) or application delivery (stream)
  // has consumed [0, consumed_). Out-of-order bytes wait in reorder_.
  // TODO: spill reorder_ to the sink when the reorder extent outgrows memory.
  u128 consumed_ = 0;
  std::map<u128, std::vector<std::uint8_t>> reorder_;
  std::map<u128, u128> gaps_;  // stream: abandoned ranges
  Sha256 digest_;
  std::optional<u128> stream_end_;

  Time start_time_ = 0;
  Time complete_time_ = 0;
  Time last_heard_ = 0;
  Time last_status_sent_ = -1e300;
  u128 bytes_received_ = 0;
  u128 unique_bytes_ = 0;
  u128 gap_bytes_ = 0;
  std::uint64_t status_sent_ = 0;
  bool digest_ok_ = false;
};

}  // namespace saratoga::session
