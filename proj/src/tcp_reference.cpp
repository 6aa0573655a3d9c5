#include <algorithm>
#include <cmath>

#include "saratoga/netsim.hpp"

namespace saratoga::netsim {

std::string_view to_string(TcpPhase p) {
  switch (p) {
    case TcpPhase::SlowStart: return "SlowStart";
    case TcpPhase::CongestionAvoidance: return "CongestionAvoidance";
    case TcpPhase::FastRecovery: return "FastRecovery";
    case TcpPhase::Timeout: return "Timeout";
  }
  return "?";
}

namespace {

// Window below which a loss cannot gather three duplicate acks.
constexpr double kFastRetransmitMinWindow = 4.0;
constexpr double kNever = 1e300;

}  // namespace

TcpRefResult run_tcp_reference(const SimLinkConfig& link, double duration,
                               const TcpRefParams& params) {
  TcpRefResult res;
  TcpRefState& st = res.state;
  res.duration = duration;
  if (duration <= 0 || !config_valid(link)) return res;

  Rng rng(mix_seed(link.seed, 0x7C9));
  const double pkt_bytes = static_cast<double>(params.mss + params.header_bytes);
  const double capacity = link.rate_bps / (8.0 * pkt_bytes);  // packets/s
  const double base_rtt = 2.0 * link.one_way_delay + 1.0 / capacity;
  const double max_window = std::max(1.0, params.rwnd_bytes / static_cast<double>(params.mss));
  const double queue_cap = static_cast<double>(link.queue_len);
  const double dt = params.dt;

  st.cwnd = 1.0;
  st.ssthresh = max_window;
  st.phase = TcpPhase::SlowStart;
  st.rtt = base_rtt;

  double q = 0.0;
  double delivered = 0.0;  // packets through the bottleneck without random loss
  double loss_detect_at = kNever;
  double phase_until = 0.0;
  double srtt = base_rtt;
  double rttvar = base_rtt / 2.0;
  double next_sample = 0.0;

  const auto steps = static_cast<std::uint64_t>(std::ceil(duration / dt));
  for (std::uint64_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double rtt = base_rtt + q / capacity;
    st.rtt = rtt;
    srtt = 0.875 * srtt + 0.125 * rtt;
    rttvar = 0.75 * rttvar + 0.25 * std::abs(rtt - srtt);

    const bool silent = st.phase == TcpPhase::Timeout;
    const double x = silent ? 0.0 : st.cwnd / rtt;

    if (t >= next_sample) {
      st.trace.push_back(TcpSample{t, x * pkt_bytes * 8.0, q, st.cwnd, st.phase});
      next_sample += params.sample_interval;
    }

    // Bottleneck queue.
    const double arriving = x * dt;
    const double served = std::min(capacity * dt, q + arriving);
    q += arriving - served;
    bool loss = false;
    if (q > queue_cap) {
      q = queue_cap;
      loss = true;
      ++res.overflow_events;
    }
    double lost_random = 0.0;
    if (link.loss_prob > 0 && served > 0) {
      const double p_any = 1.0 - std::pow(1.0 - link.loss_prob, served);
      if (rng.bernoulli(p_any)) {
        loss = true;
        lost_random = std::min(served, 1.0);
      }
    }
    delivered += served - lost_random;

    // A loss is noticed one round trip after it happens; later losses in the
    // same window belong to the same event.
    if (loss && loss_detect_at == kNever && !silent) loss_detect_at = t + rtt;

    if (t >= loss_detect_at) {
      loss_detect_at = kNever;
      ++res.loss_events;
      if (st.cwnd >= kFastRetransmitMinWindow) {
        st.ssthresh = std::max(st.cwnd / 2.0, 2.0);
        st.cwnd = st.ssthresh;
        st.phase = TcpPhase::FastRecovery;
        phase_until = t + rtt;
      } else {
        ++res.timeouts;
        st.ssthresh = std::max(st.cwnd / 2.0, 2.0);
        st.cwnd = 1.0;
        st.phase = TcpPhase::Timeout;
        phase_until = t + std::max(params.min_rto, srtt + 4.0 * rttvar);
      }
      continue;
    }

    switch (st.phase) {
      case TcpPhase::SlowStart:
        st.cwnd *= std::exp2(dt / rtt);
        if (st.cwnd >= st.ssthresh) st.phase = TcpPhase::CongestionAvoidance;
        break;
      case TcpPhase::CongestionAvoidance:
        st.cwnd += dt / rtt;
        break;
      case TcpPhase::FastRecovery:
        if (t >= phase_until) st.phase = TcpPhase::CongestionAvoidance;
        break;
      case TcpPhase::Timeout:
        if (t >= phase_until) st.phase = TcpPhase::SlowStart;
        break;
    }
    st.cwnd = std::clamp(st.cwnd, 1.0, max_window);
  }

  res.goodput_bytes = delivered * static_cast<double>(params.mss);
  res.utilization = std::clamp(res.goodput_bytes * 8.0 / (link.rate_bps * duration), 0.0, 1.0);
  return res;
}

std::size_t count_sawtooth_peaks(const std::vector<TcpSample>& trace, double link_rate_bps,
                                 double fall_fraction) {
  std::size_t peaks = 0;
  bool above = false;
  for (const TcpSample& s : trace) {
    if (!above && s.rate_bps > link_rate_bps) {
      above = true;
    } else if (above && s.rate_bps < fall_fraction * link_rate_bps) {
      above = false;
      ++peaks;
    }
  }
  return peaks;
}

}  // namespace saratoga::netsim
