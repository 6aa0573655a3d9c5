#include "saratoga/trace.hpp"

#include <istream>
#include <ostream>

#include "saratoga/report_json.hpp"

namespace saratoga::trace {

using nlohmann::json;

namespace {

std::string hex_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

std::optional<std::vector<std::uint8_t>> hex_decode(std::string_view s) {
  if (s.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(s[2 * i]);
    const int lo = nibble(s[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

std::optional<session::TimerId> timer_from(std::string_view s) {
  for (auto id : {session::TimerId::Idle, session::TimerId::Poll, session::TimerId::StatusTick,
                  session::TimerId::Linger}) {
    if (session::to_string(id) == s) return id;
  }
  return std::nullopt;
}

std::optional<session::FailureReason> reason_from(std::string_view s) {
  using session::FailureReason;
  for (auto r : {FailureReason::IdleTimeout, FailureReason::ProtocolViolation,
                 FailureReason::DigestMismatch, FailureReason::SourceOverrun,
                 FailureReason::MaxDuration}) {
    if (session::to_string(r) == s) return r;
  }
  return std::nullopt;
}

// Accepts any packet a valid session configuration can produce.
const wire::WireConfig kTraceWire{wire::kMaxDatagram - wire::kWorstCaseDataHeader,
                                  (wire::kMaxDatagram - wire::kHeaderBytes - 18) / 32};

json packet_to_json(const wire::Packet& p) {
  auto bytes = wire::encode_packet(p, kTraceWire);
  return bytes ? json(hex_encode(*bytes)) : json(nullptr);
}

Expected<wire::Packet, std::string> packet_from_json(const json& j) {
  if (!j.is_string()) return unexpected(std::string("packet is not a hex string"));
  auto bytes = hex_decode(j.get<std::string>());
  if (!bytes) return unexpected(std::string("bad packet hex"));
  auto p = wire::decode_packet(*bytes, kTraceWire);
  if (!p) return unexpected("packet does not decode: " + std::string(wire::to_string(p.error())));
  return std::move(p).value();
}

}  // namespace

json start_to_json(std::string_view actor, session::Time now) {
  return json{{"t", now}, {"actor", actor}, {"kind", "start"}};
}

json event_to_json(std::string_view actor, const session::Event& e) {
  json j{{"t", session::event_time(e)}, {"actor", actor}, {"kind", "event"}};
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, session::event::PacketArrived>) {
          j["type"] = "PacketArrived";
          j["packet"] = packet_to_json(ev.packet);
        } else if constexpr (std::is_same_v<T, session::event::TimerFired>) {
          j["type"] = "TimerFired";
          j["timer"] = session::to_string(ev.id);
        } else if constexpr (std::is_same_v<T, session::event::StreamData>) {
          j["type"] = "StreamData";
          j["bytes"] = hex_encode(ev.bytes);
          j["end_of_stream"] = ev.end_of_stream;
        } else {
          j["type"] = "TransmitReady";
        }
      },
      e);
  return j;
}

json action_to_json(std::string_view actor, session::Time now, const session::Action& a) {
  json j{{"t", now}, {"actor", actor}, {"kind", "action"}};
  std::visit(
      [&](const auto& act) {
        using T = std::decay_t<decltype(act)>;
        if constexpr (std::is_same_v<T, session::action::SendPacket>) {
          j["type"] = "SendPacket";
          j["packet"] = packet_to_json(act.packet);
          j["earliest"] = act.earliest;
        } else if constexpr (std::is_same_v<T, session::action::SetTimer>) {
          j["type"] = "SetTimer";
          j["timer"] = session::to_string(act.id);
          j["deadline"] = act.deadline;
        } else if constexpr (std::is_same_v<T, session::action::WriteSink>) {
          j["type"] = "WriteSink";
          j["offset"] = report::u128_to_json(act.offset);
          j["bytes"] = hex_encode(act.bytes);
        } else if constexpr (std::is_same_v<T, session::action::ReadSource>) {
          j["type"] = "ReadSource";
          j["offset"] = report::u128_to_json(act.offset);
          j["len"] = act.len;
        } else if constexpr (std::is_same_v<T, session::action::Finished>) {
          j["type"] = "Finished";
          j["report"] = report::to_json(act.report);
        } else {
          j["type"] = "Abort";
          j["reason"] = session::to_string(act.reason);
          j["report"] = report::to_json(act.report);
        }
      },
      a);
  return j;
}

Expected<session::Event, std::string> event_from_json(const json& j) {
  try {
    const double t = j.at("t").get<double>();
    const auto type = j.at("type").get<std::string>();
    if (type == "PacketArrived") {
      auto p = packet_from_json(j.at("packet"));
      if (!p) return unexpected(p.error());
      return session::Event{session::event::PacketArrived{std::move(p).value(), t}};
    }
    if (type == "TimerFired") {
      auto id = timer_from(j.at("timer").get<std::string>());
      if (!id) return unexpected(std::string("unknown timer"));
      return session::Event{session::event::TimerFired{*id, t}};
    }
    if (type == "StreamData") {
      auto bytes = hex_decode(j.at("bytes").get<std::string>());
      if (!bytes) return unexpected(std::string("bad stream bytes"));
      return session::Event{
          session::event::StreamData{std::move(*bytes), j.at("end_of_stream").get<bool>(), t}};
    }
    if (type == "TransmitReady") return session::Event{session::event::TransmitReady{t}};
    return unexpected("unknown event type '" + type + "'");
  } catch (const json::exception& e) {
    return unexpected(std::string(e.what()));
  }
}

Expected<session::Action, std::string> action_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "SendPacket") {
      auto p = packet_from_json(j.at("packet"));
      if (!p) return unexpected(p.error());
      return session::Action{
          session::action::SendPacket{std::move(p).value(), j.at("earliest").get<double>()}};
    }
    if (type == "SetTimer") {
      auto id = timer_from(j.at("timer").get<std::string>());
      if (!id) return unexpected(std::string("unknown timer"));
      return session::Action{session::action::SetTimer{*id, j.at("deadline").get<double>()}};
    }
    if (type == "WriteSink" || type == "ReadSource") {
      auto off = report::u128_from_json(j.at("offset"));
      if (!off) return unexpected(std::string("bad offset"));
      if (type == "ReadSource") {
        return session::Action{session::action::ReadSource{*off, j.at("len").get<std::size_t>()}};
      }
      auto bytes = hex_decode(j.at("bytes").get<std::string>());
      if (!bytes) return unexpected(std::string("bad sink bytes"));
      return session::Action{session::action::WriteSink{*off, std::move(*bytes)}};
    }
    if (type == "Finished" || type == "Abort") {
      auto rep = report::transfer_report_from_json(j.at("report"));
      if (!rep) return unexpected(rep.error());
      if (type == "Finished") return session::Action{session::action::Finished{*rep}};
      auto why = reason_from(j.at("reason").get<std::string>());
      if (!why) return unexpected(std::string("unknown abort reason"));
      return session::Action{session::action::Abort{*why, *rep}};
    }
    return unexpected("unknown action type '" + type + "'");
  } catch (const json::exception& e) {
    return unexpected(std::string(e.what()));
  }
}

void write_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

namespace detail {

bool next_line(std::istream& in, std::string_view actor, Line& line, std::string& error) {
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      error = "malformed trace line";
      return false;
    }
    if (j.value("actor", std::string()) != actor) continue;
    const auto kind = j.value("kind", std::string());
    line.kind = kind == "start"    ? Line::Start
                : kind == "event"  ? Line::Event
                : kind == "action" ? Line::Action
                                   : Line::Other;
    line.now = j.value("t", 0.0);
    line.json = std::move(j);
    return true;
  }
  return false;
}

void compare_actions(const std::vector<session::Action>& produced, session::Time now,
                     std::string_view actor, std::vector<json>& expected, ReplayResult& r) {
  const std::size_t n = std::max(produced.size(), expected.size());
  for (std::size_t i = 0; i < n; ++i) {
    ++r.actions;
    const json got = i < produced.size() ? action_to_json(actor, now, produced[i]) : json();
    const json want = i < expected.size() ? expected[i] : json();
    if (got != want) {
      if (r.mismatches == 0) r.first_mismatch = "want " + want.dump() + " got " + got.dump();
      ++r.mismatches;
    }
  }
}

}  // namespace detail

}  // namespace saratoga::trace
