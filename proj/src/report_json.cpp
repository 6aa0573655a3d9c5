#include "saratoga/report_json.hpp"

#include <cstdint>
#include <limits>

namespace saratoga::report {

using nlohmann::json;

json u128_to_json(u128 v) {
  if (high64(v) == 0) return json(low64(v));
  return json(to_string(v));
}

std::optional<u128> u128_from_json(const json& j) {
  if (j.is_number_unsigned()) return u128{j.get<std::uint64_t>()};
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) return std::nullopt;
    return u128{static_cast<std::uint64_t>(v)};
  }
  if (j.is_string()) return parse_u128(j.get<std::string>());
  return std::nullopt;
}

json to_json(const session::TransferReport& r) {
  return json{
      {"schema_version", kSchemaVersion},
      {"mode", std::string(session::to_string(r.mode))},
      {"bytes_delivered", u128_to_json(r.bytes_delivered)},
      {"unique_bytes", u128_to_json(r.unique_bytes)},
      {"retransmitted_bytes", u128_to_json(r.retransmitted_bytes)},
      {"duration_s", r.duration},
      {"goodput_bps", r.goodput_bps},
      {"status_packets", r.status_packets},
      {"digest_ok", r.digest_ok},
      {"gap_bytes", u128_to_json(r.gap_bytes)},
  };
}

Expected<session::TransferReport, std::string> transfer_report_from_json(const json& j) {
  if (!j.is_object()) return unexpected(std::string("report is not an object"));
  const auto version = j.value("schema_version", std::string());
  if (version.empty() || version.front() != kSchemaVersion[0]) {
    return unexpected("unsupported schema_version '" + version + "'");
  }
  try {
    session::TransferReport r;
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "file") {
      r.mode = session::TransferMode::File;
    } else if (mode == "stream") {
      r.mode = session::TransferMode::Stream;
    } else {
      return unexpected("bad mode '" + mode + "'");
    }
    auto big = [&](const char* key, u128& dst) -> bool {
      auto v = u128_from_json(j.at(key));
      if (!v) return false;
      dst = *v;
      return true;
    };
    if (!big("bytes_delivered", r.bytes_delivered) || !big("unique_bytes", r.unique_bytes) ||
        !big("retransmitted_bytes", r.retransmitted_bytes)) {
      return unexpected(std::string("bad byte count"));
    }
    if (j.contains("gap_bytes") && !big("gap_bytes", r.gap_bytes)) {
      return unexpected(std::string("bad gap_bytes"));
    }
    r.duration = j.at("duration_s").get<double>();
    r.goodput_bps = j.at("goodput_bps").get<double>();
    r.status_packets = j.at("status_packets").get<std::uint64_t>();
    r.digest_ok = j.at("digest_ok").get<bool>();
    return r;
  } catch (const json::exception& e) {
    return unexpected(std::string(e.what()));
  }
}

json to_json(const netsim::SimLinkConfig& c) {
  return json{
      {"rate_bps", c.rate_bps},          {"one_way_delay_s", c.one_way_delay},
      {"loss_prob", c.loss_prob},        {"queue_len", c.queue_len},
      {"seed", c.seed},                  {"overhead_bytes", c.overhead_bytes},
  };
}

json to_json(const netsim::ComparisonReport& r) {
  json traces = json::array();
  for (const auto& row : r.traces) {
    traces.push_back(json{{"time_s", row.time_s},
                          {"flow", row.flow},
                          {"rate_bps", row.rate_bps},
                          {"queue_pkts", row.queue_pkts}});
  }
  return json{
      {"schema_version", kSchemaVersion},
      {"link", to_json(r.link)},
      {"file_size", u128_to_json(r.file_size)},
      {"duration_s", r.duration},
      {"tcp_model",
       {{"mss", r.params.tcp.mss},
        {"header_bytes", r.params.tcp.header_bytes},
        {"rwnd_bytes", r.params.tcp.rwnd_bytes},
        {"min_rto_s", r.params.tcp.min_rto},
        {"dt_s", r.params.tcp.dt}}},
      {"saratoga_utilization", r.saratoga_utilization},
      {"saratoga_completion_time_s", r.saratoga_completion_time},
      {"saratoga_retransmitted_bytes", u128_to_json(r.saratoga_retransmitted_bytes)},
      {"tcp_utilization", r.tcp_utilization},
      {"tcp_loss_events", r.tcp_loss_events},
      {"tcp_timeouts", r.tcp_timeouts},
      {"tcp_peaks", r.tcp_peaks},
      {"tcp_peaks_per_minute", r.tcp_peaks_per_minute},
      {"traces", std::move(traces)},
  };
}

}  // namespace saratoga::report
