#pragma once

// Line-rate transfer vs. AIMD reference flow on identical link settings.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "saratoga/expected.hpp"
#include "saratoga/netsim.hpp"
#include "saratoga/sim.hpp"

namespace saratoga::netsim {

struct ComparisonParams {
  TcpRefParams tcp;
  session::SessionConfig session;
  double trace_interval = 0.5;
};

struct TraceRow {
  double time_s = 0.0;
  std::string flow;  // "saratoga" | "tcp"
  double rate_bps = 0.0;
  double queue_pkts = 0.0;
};

struct ComparisonReport {
  SimLinkConfig link;
  u128 file_size = 0;
  double duration = 0.0;  // TCP run length
  ComparisonParams params;

  double saratoga_utilization = 0.0;
  double saratoga_completion_time = 0.0;
  u128 saratoga_retransmitted_bytes = 0;
  double tcp_utilization = 0.0;
  std::uint64_t tcp_loss_events = 0;
  std::uint64_t tcp_timeouts = 0;
  std::size_t tcp_peaks = 0;
  double tcp_peaks_per_minute = 0.0;

  std::vector<TraceRow> traces;
};

/// Transfers `file_size` bytes with the line-rate pacer and runs the reference
/// flow for `duration` seconds, each over its own link instance.
Expected<ComparisonReport, sim::TransferFailed> run_comparison(const SimLinkConfig& link,
                                                               u128 file_size, double duration,
                                                               const ComparisonParams& params = {});

/// `time_s,flow,rate_bps,queue_pkts` rows with a header line.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

}  // namespace saratoga::netsim
