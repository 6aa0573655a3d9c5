#include "saratoga/comparison.hpp"

#include <algorithm>
#include <ostream>

namespace saratoga::netsim {

Expected<ComparisonReport, sim::TransferFailed> run_comparison(const SimLinkConfig& link,
                                                               u128 file_size, double duration,
                                                               const ComparisonParams& params) {
  ComparisonReport rep;
  rep.link = link;
  rep.file_size = file_size;
  rep.duration = duration;
  rep.params = params;

  sim::TransferConfig tc;
  tc.link = link;
  tc.link.seed = mix_seed(link.seed, 0x5A);
  tc.session = params.session;
  tc.pacer = rate::PacerSpec{rate::PacerMode::LineRate, 0.0};
  tc.trace_interval = params.trace_interval;
  auto file = std::make_shared<session::PatternSource>(file_size, link.seed);
  auto res = sim::run_transfer(tc, file);
  if (!res) return unexpected(res.error());

  rep.saratoga_completion_time = res->completion_time;
  rep.saratoga_retransmitted_bytes = res->sender.retransmitted_bytes;
  if (res->completion_time > 0) {
    rep.saratoga_utilization = std::clamp(
        8.0 * to_double(res->receiver.unique_bytes) / (link.rate_bps * res->completion_time), 0.0,
        1.0);
  }
  for (const auto& s : res->trace) {
    rep.traces.push_back(TraceRow{s.time, "saratoga", s.rate_bps, s.queue_pkts});
  }

  TcpRefParams tcp = params.tcp;
  tcp.sample_interval = params.trace_interval > 0 ? std::min(tcp.sample_interval, params.trace_interval)
                                                   : tcp.sample_interval;
  SimLinkConfig tcp_link = link;
  tcp_link.seed = mix_seed(link.seed, 0x7C);
  const TcpRefResult ref = run_tcp_reference(tcp_link, duration, tcp);
  rep.tcp_utilization = ref.utilization;
  rep.tcp_loss_events = ref.loss_events;
  rep.tcp_timeouts = ref.timeouts;
  rep.tcp_peaks = count_sawtooth_peaks(ref.state.trace, link.rate_bps);
  rep.tcp_peaks_per_minute =
      duration > 0 ? static_cast<double>(rep.tcp_peaks) * 60.0 / duration : 0.0;

  // The reference trace is recorded finely for peak detection; the report
  // keeps one row per trace interval.
  double next = 0.0;
  for (const auto& s : ref.state.trace) {
    if (params.trace_interval > 0 && s.time + 1e-9 < next) continue;
    rep.traces.push_back(TraceRow{s.time, "tcp", s.rate_bps, s.queue_pkts});
    next = s.time + params.trace_interval;
  }
  std::stable_sort(rep.traces.begin(), rep.traces.end(),
                   [](const TraceRow& a, const TraceRow& b) { return a.time_s < b.time_s; });
  return rep;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "time_s,flow,rate_bps,queue_pkts\n";
  for (const auto& r : rows) {
    out << r.time_s << ',' << r.flow << ',' << r.rate_bps << ',' << r.queue_pkts << '\n';
  }
}

}  // namespace saratoga::netsim
