#pragma once

// Deterministic discrete-event link simulation and the AIMD TCP reference
// flow used for the line-rate vs. TCP comparison.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace saratoga::netsim {

struct SimLinkConfig {
  double rate_bps = 128000.0;
  double one_way_delay = 0.25;  // seconds
  double loss_prob = 0.0;       // i.i.d. per packet, applied after serialization
  std::size_t queue_len = 20;   // packets, including the one being serialized
  std::uint64_t seed = 1;
  /// Bytes added to every packet on the wire (IPv4 + UDP headers).
  std::size_t overhead_bytes = 28;
};

bool config_valid(const SimLinkConfig& cfg);

/// splitmix64 step; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded 64-bit generator with a platform-independent uniform draw
/// (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix_seed(seed, 0)) {}
  std::uint64_t next() { return gen_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

/// Time-ordered event queue; ties pop in insertion order.
template <typename T>
class EventQueue {
 public:
  struct Entry {
    double time;
    std::uint64_t seq;
    T item;
  };

  void push(double time, T item) { heap_.push(Entry{time, next_seq_++, std::move(item)}); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  double next_time() const { return heap_.top().time; }

  /// Pops the earliest entry and advances now().
  Entry pop() {
    Entry e = std::move(const_cast<Entry&>(heap_.top()));
    heap_.pop();
    now_ = e.time;
    return e;
  }
  double now() const { return now_; }

 private:
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
};

enum class LinkOutcome { Delivered, TailDrop, RandomLoss };

struct LinkResult {
  LinkOutcome outcome = LinkOutcome::Delivered;
  double departure = 0.0;  // end of serialization (not set for tail drops)
  double arrival = 0.0;    // departure + one_way_delay (Delivered only)
};

struct LinkCounters {
  std::uint64_t offered = 0;
  std::uint64_t delivered = 0;
  std::uint64_t tail_drops = 0;
  std::uint64_t random_losses = 0;
  std::size_t max_occupancy = 0;
};

/// FIFO drop-tail link: serialization at `rate_bps`, then propagation delay,
/// with Bernoulli loss after serialization.
class SimLink {
 public:
  explicit SimLink(SimLinkConfig cfg);

  LinkResult send(std::size_t packet_bytes, double now);

  /// Packets queued or in serialization at `now`.
  std::size_t occupancy(double now);
  /// Time at which the transmitter finishes everything accepted so far.
  double idle_at() const { return busy_until_; }
  double serialization_time(std::size_t packet_bytes) const;

  const SimLinkConfig& config() const { return cfg_; }
  const LinkCounters& counters() const { return counters_; }

 private:
  SimLinkConfig cfg_;
  Rng rng_;
  double busy_until_ = 0.0;
  std::deque<double> departures_;  // departure times of packets still in the queue
  LinkCounters counters_;
};

// TCP reference --------------------------------------------------------------

enum class TcpPhase { SlowStart, CongestionAvoidance, FastRecovery, Timeout };

std::string_view to_string(TcpPhase p);

struct TcpRefParams {
  /// Segment payload and header sizes. 256 + 40 is the classic 296-byte MTU
  /// used on low-rate serial links.
  std::size_t mss = 256;
  std::size_t header_bytes = 40;
  double min_rto = 1.0;
  double initial_rto = 3.0;
  /// Receive window cap in bytes.
  double rwnd_bytes = 65535.0;
  /// Fluid integration step and trace sampling interval, seconds.
  double dt = 0.002;
  double sample_interval = 0.1;
};

struct TcpSample {
  double time = 0.0;
  double rate_bps = 0.0;   // offered sending rate
  double queue_pkts = 0.0;
  double cwnd = 0.0;
  TcpPhase phase = TcpPhase::SlowStart;
};

struct TcpRefState {
  double cwnd = 1.0;  // packets
  double ssthresh = 0.0;
  double rtt = 0.0;
  TcpPhase phase = TcpPhase::SlowStart;
  std::vector<TcpSample> trace;
};

struct TcpRefResult {
  TcpRefState state;
  double duration = 0.0;
  double goodput_bytes = 0.0;
  double utilization = 0.0;  // goodput bits / (rate * duration)
  std::uint64_t loss_events = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t overflow_events = 0;
};

/// Fluid AIMD (Reno-style) flow over a drop-tail link; deterministic given
/// the link seed.
TcpRefResult run_tcp_reference(const SimLinkConfig& link, double duration,
                               const TcpRefParams& params = {});

/// Counts sawtooth peaks: excursions above `link_rate_bps` that later fall
/// below `fall_fraction` of it.
std::size_t count_sawtooth_peaks(const std::vector<TcpSample>& trace, double link_rate_bps,
                                 double fall_fraction = 0.75);

}  // namespace saratoga::netsim
