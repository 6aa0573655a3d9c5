#pragma once

// Packet pacing: unpaced line-rate blasting, a fixed-rate token bucket, and a
// sender-side TFRC controller driven by SNACK-derived loss counts.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace saratoga::rate {

inline constexpr std::size_t kLossHistory = 8;
inline constexpr double kLossWeights[kLossHistory] = {1.0, 1.0, 1.0, 1.0, 0.8, 0.6, 0.4, 0.2};

struct TfrcState {
  double segment_size = 1460.0;  // bytes
  double rtt = 0.5;              // smoothed, seconds
  double loss_event_rate = 0.0;
  double rto = 2.0;              // always 4 * rtt
  double rate = 0.0;             // allowed sending rate, bytes/s
  double rate_cap = 0.0;         // bytes/s
  std::vector<double> loss_intervals;  // closed intervals in packets, newest first
  double open_interval = 0.0;          // packets since the most recent loss event
  bool rtt_measured = false;
};

/// Fresh controller: rate starts at 4 segments per assumed RTT, capped.
TfrcState tfrc_initial(double segment_size, double rate_cap, double initial_rtt = 0.5);

/// Throughput equation with b = 1, uncapped. p must be > 0.
double tfrc_equation(double s, double rtt, double p, double t_rto);

/// Allowed rate for the state's s, R, p, t_RTO: X_max when p = 0.
double tfrc_throughput(const TfrcState& st);

/// Weighted mean loss interval (open interval counted when it raises the
/// mean); 0 when no loss has been seen.
double mean_loss_interval(const std::vector<double>& closed, double open);

TfrcState tfrc_on_feedback(TfrcState st, double rtt_sample, std::uint64_t new_loss_events,
                           std::uint64_t packets_since_last);

enum class PacerMode { LineRate, Fixed, Tfrc };

/// Token-bucket pacer. LineRate never delays.
class Pacer {
 public:
  static Pacer line_rate();
  static Pacer fixed(double rate_bps, double burst_cap_bytes);
  static Pacer tfrc(TfrcState state, double burst_cap_bytes);

  /// Earliest time a packet of `pkt_bytes` may leave, and commits it.
  double earliest_send(std::size_t pkt_bytes, double now);

  /// Feeds SNACK-derived loss information; only Tfrc reacts.
  void on_feedback(double rtt_sample, std::uint64_t new_loss_events,
                   std::uint64_t packets_since_last);

  PacerMode mode() const { return mode_; }
  /// Current token rate in bytes/s (0 for LineRate).
  double rate_bytes_per_s() const;
  double bucket() const { return bucket_; }
  double burst_cap() const { return burst_cap_; }
  const TfrcState* tfrc_state() const { return mode_ == PacerMode::Tfrc ? &tfrc_ : nullptr; }

 private:
  PacerMode mode_ = PacerMode::LineRate;
  double fixed_rate_ = 0.0;  // bytes/s
  double bucket_ = 0.0;
  double burst_cap_ = 0.0;
  double last_update_ = 0.0;
  bool primed_ = false;
  TfrcState tfrc_;
};

/// Pacer selection as written on the command line: line | fixed:<bps> | tfrc.
struct PacerSpec {
  PacerMode mode = PacerMode::LineRate;
  double rate_bps = 0.0;
};

std::optional<PacerSpec> parse_pacer_spec(std::string_view text);
std::string to_string(const PacerSpec& spec);

/// Builds a pacer; `line_rate_bps` caps TFRC (0 means effectively unbounded).
Pacer make_pacer(const PacerSpec& spec, std::size_t max_payload, double line_rate_bps);

}  // namespace saratoga::rate
