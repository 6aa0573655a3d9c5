#include "saratoga/rate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace saratoga::rate {

namespace {

// Rate floor: one segment per 64 s.
constexpr double kMaxBackoffInterval = 64.0;
constexpr double kUnboundedRate = 1e15;

// Loss event rate at which the equation yields `target` bytes/s.
double solve_loss_rate(double s, double rtt, double target) {
  double lo = 1e-12;
  double hi = 1.0;
  if (tfrc_equation(s, rtt, lo, 4 * rtt) <= target) return lo;
  if (tfrc_equation(s, rtt, hi, 4 * rtt) >= target) return hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (tfrc_equation(s, rtt, mid, 4 * rtt) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

}  // namespace

TfrcState tfrc_initial(double segment_size, double rate_cap, double initial_rtt) {
  TfrcState st;
  st.segment_size = segment_size;
  st.rtt = initial_rtt;
  st.rto = 4 * initial_rtt;
  st.rate_cap = rate_cap;
  st.rate = std::min(rate_cap, 4 * segment_size / initial_rtt);
  return st;
}

double tfrc_equation(double s, double rtt, double p, double t_rto) {
  const double denom = rtt * std::sqrt(2 * p / 3) +
                       t_rto * (3 * std::sqrt(3 * p / 8)) * p * (1 + 32 * p * p);
  return s / denom;
}

double tfrc_throughput(const TfrcState& st) {
  if (st.loss_event_rate <= 0) return st.rate_cap;
  return std::min(st.rate_cap,
                  tfrc_equation(st.segment_size, st.rtt, st.loss_event_rate, st.rto));
}

double mean_loss_interval(const std::vector<double>& closed, double open) {
  const std::size_t n = std::min(closed.size(), kLossHistory);
  if (n == 0) return 0.0;
  double w_tot = 0;
  double with_open = 0;     // open interval as the newest entry
  double without_open = 0;  // closed intervals only
  for (std::size_t i = 0; i < n; ++i) {
    w_tot += kLossWeights[i];
    without_open += closed[i] * kLossWeights[i];
    with_open += (i == 0 ? open : closed[i - 1]) * kLossWeights[i];
  }
  return std::max(with_open, without_open) / w_tot;
}

TfrcState tfrc_on_feedback(TfrcState st, double rtt_sample, std::uint64_t new_loss_events,
                           std::uint64_t packets_since_last) {
  if (rtt_sample > 0) {
    st.rtt = st.rtt_measured ? 0.9 * st.rtt + 0.1 * rtt_sample : rtt_sample;
    st.rtt_measured = true;
  }
  st.rto = 4 * st.rtt;

  const double n = static_cast<double>(packets_since_last);
  if (new_loss_events == 0) {
    st.open_interval += n;
  } else {
    // Losses closer together than one round trip form a single event.
    const double per_rtt = std::max(1.0, st.rate * st.rtt / st.segment_size);
    const auto distinct = static_cast<std::uint64_t>(
        std::max(1.0, std::min(static_cast<double>(new_loss_events), std::floor(n / per_rtt))));
    const double spacing = n / static_cast<double>(distinct);
    std::uint64_t remaining = distinct;
    if (st.loss_intervals.empty()) {
      // First loss: seed the history so the equation gives half the current rate.
      const double p0 = solve_loss_rate(st.segment_size, st.rtt, st.rate / 2);
      st.loss_intervals.insert(st.loss_intervals.begin(), 1.0 / p0);
      --remaining;
      st.open_interval = 0;
    } else {
      st.loss_intervals.insert(st.loss_intervals.begin(), st.open_interval + spacing);
      --remaining;
    }
    for (; remaining > 0; --remaining) {
      st.loss_intervals.insert(st.loss_intervals.begin(), spacing);
    }
    if (st.loss_intervals.size() > kLossHistory) st.loss_intervals.resize(kLossHistory);
    st.open_interval = 0;
  }

  const double mean = mean_loss_interval(st.loss_intervals, st.open_interval);
  st.loss_event_rate = mean > 0 ? std::min(1.0, 1.0 / mean) : 0.0;

  const double target = tfrc_throughput(st);
  double next = std::clamp(target, st.rate / 2, st.rate * 2);
  next = std::min(next, st.rate_cap);
  next = std::max(next, st.segment_size / kMaxBackoffInterval);
  st.rate = next;
  return st;
}

Pacer Pacer::line_rate() { return Pacer{}; }

Pacer Pacer::fixed(double rate_bps, double burst_cap_bytes) {
  Pacer p;
  p.mode_ = PacerMode::Fixed;
  p.fixed_rate_ = rate_bps / 8.0;
  p.burst_cap_ = burst_cap_bytes;
  p.bucket_ = burst_cap_bytes;
  return p;
}

Pacer Pacer::tfrc(TfrcState state, double burst_cap_bytes) {
  Pacer p;
  p.mode_ = PacerMode::Tfrc;
  p.tfrc_ = std::move(state);
  p.burst_cap_ = burst_cap_bytes;
  p.bucket_ = burst_cap_bytes;
  return p;
}

double Pacer::rate_bytes_per_s() const {
  switch (mode_) {
    case PacerMode::LineRate: return 0.0;
    case PacerMode::Fixed: return fixed_rate_;
    case PacerMode::Tfrc: return tfrc_.rate;
  }
  return 0.0;
}

double Pacer::earliest_send(std::size_t pkt_bytes, double now) {
  if (mode_ == PacerMode::LineRate) return now;
  const double rate = rate_bytes_per_s();
  if (!primed_) {
    last_update_ = now;
    primed_ = true;
  }
  double t = std::max(now, last_update_);
  bucket_ = std::min(burst_cap_, bucket_ + (t - last_update_) * rate);
  const auto need = static_cast<double>(pkt_bytes);
  if (bucket_ >= need) {
    bucket_ -= need;
  } else {
    t += (need - bucket_) / rate;
    bucket_ = 0;
  }
  last_update_ = t;
  return t;
}

void Pacer::on_feedback(double rtt_sample, std::uint64_t new_loss_events,
                        std::uint64_t packets_since_last) {
  if (mode_ != PacerMode::Tfrc) return;
  tfrc_ = tfrc_on_feedback(std::move(tfrc_), rtt_sample, new_loss_events, packets_since_last);
}

std::optional<PacerSpec> parse_pacer_spec(std::string_view text) {
  if (text == "line") return PacerSpec{PacerMode::LineRate, 0.0};
  if (text == "tfrc") return PacerSpec{PacerMode::Tfrc, 0.0};
  constexpr std::string_view kFixed = "fixed:";
  if (text.substr(0, kFixed.size()) == kFixed) {
    const auto num = text.substr(kFixed.size());
    double bps = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), bps);
    if (ec != std::errc{} || ptr != num.data() + num.size() || !(bps > 0) || !std::isfinite(bps)) {
      return std::nullopt;
    }
    return PacerSpec{PacerMode::Fixed, bps};
  }
  return std::nullopt;
}

std::string to_string(const PacerSpec& spec) {
  switch (spec.mode) {
    case PacerMode::LineRate: return "line";
    case PacerMode::Tfrc: return "tfrc";
    case PacerMode::Fixed: {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, spec.rate_bps, std::chars_format::fixed);
      (void)ec;
      return "fixed:" + std::string(buf, ptr);
    }
  }
  return "line";
}

Pacer make_pacer(const PacerSpec& spec, std::size_t max_payload, double line_rate_bps) {
  const double burst_cap = 8.0 * static_cast<double>(max_payload);
  switch (spec.mode) {
    case PacerMode::LineRate: return Pacer::line_rate();
    case PacerMode::Fixed: return Pacer::fixed(spec.rate_bps, burst_cap);
    case PacerMode::Tfrc: {
      const double cap = line_rate_bps > 0 ? line_rate_bps / 8.0 : kUnboundedRate;
      return Pacer::tfrc(tfrc_initial(static_cast<double>(max_payload), cap), burst_cap);
    }
  }
  return Pacer::line_rate();
}

}  // namespace saratoga::rate
