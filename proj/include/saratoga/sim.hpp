#pragma once

// Drives a sender and a receiver session over a pair of simulated links.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saratoga/expected.hpp"
#include "saratoga/netsim.hpp"
#include "saratoga/rate.hpp"
#include "saratoga/session.hpp"

namespace saratoga::sim {

struct TransferConfig {
  netsim::SimLinkConfig link;  // forward; the reverse link uses a derived seed
  session::SessionConfig session;
  rate::PacerSpec pacer;
  double max_duration = 3600.0;
  std::uint32_t session_id = 1;
  /// Put: the sender opens; Get: the receiver requests `path`.
  wire::Direction direction = wire::Direction::Put;
  std::string path = "sim.bin";
  /// Bin width for the forward rate trace; 0 disables it.
  double trace_interval = 0.0;
  /// Line-delimited JSON event/action log, if set.
  std::ostream* trace_log = nullptr;
};

bool config_valid(const TransferConfig& cfg);

struct RateSample {
  double time = 0.0;
  double rate_bps = 0.0;    // bytes offered to the forward link in this bin
  double queue_pkts = 0.0;  // forward queue occupancy at the bin start
};

struct TransferOutcome {
  session::TransferReport sender;
  session::TransferReport receiver;
  double completion_time = 0.0;  // receiver reached Complete
  double end_time = 0.0;         // both sessions terminated
  netsim::LinkCounters forward;
  netsim::LinkCounters reverse;
  std::uint64_t data_packets = 0;
  /// Every WriteSink matched the source, and exactly size bytes were written.
  bool sink_matches = false;
  std::vector<RateSample> trace;
};

struct TransferFailed {
  session::FailureReason reason = session::FailureReason::MaxDuration;
  double time = 0.0;
  session::TransferReport sender;
  session::TransferReport receiver;
};

Expected<TransferOutcome, TransferFailed> run_transfer(
    const TransferConfig& cfg, std::shared_ptr<const session::ByteSource> file);

/// Constant-rate application feed; the byte at stream offset o is a hash of o.
struct StreamFeed {
  double rate_bps = 64000.0;
  double chunk_interval = 0.05;
  std::uint64_t seed = 7;
};

struct StreamOutcome {
  session::TransferReport sender;
  session::TransferReport receiver;
  u128 source_bytes = 0;
  u128 delivered_bytes = 0;   // handed to the application in order
  u128 skipped_bytes = 0;     // offsets jumped over by in-order delivery
  std::uint64_t mismatched_bytes = 0;
  bool in_order = true;
  double end_time = 0.0;
};

/// Feeds `duration` seconds of stream data, then closes the stream and runs
/// both sessions to termination.
Expected<StreamOutcome, TransferFailed> run_stream(const TransferConfig& cfg,
                                                   const StreamFeed& feed, double duration);

/// Source bytes used by StreamFeed.
std::uint8_t stream_byte(std::uint64_t seed, u128 offset);

}  // namespace saratoga::sim
