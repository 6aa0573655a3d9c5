#pragma once

// Line-delimited JSON log of session events and actions, and replay of a
// recorded log against a fresh session.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "saratoga/expected.hpp"
#include "saratoga/session.hpp"

namespace saratoga::trace {

nlohmann::json start_to_json(std::string_view actor, session::Time now);
nlohmann::json event_to_json(std::string_view actor, const session::Event& e);
nlohmann::json action_to_json(std::string_view actor, session::Time now,
                              const session::Action& a);

Expected<session::Event, std::string> event_from_json(const nlohmann::json& j);
Expected<session::Action, std::string> action_from_json(const nlohmann::json& j);

/// Appends one compact JSON object and a newline.
void write_line(std::ostream& out, const nlohmann::json& j);

struct ReplayResult {
  std::size_t events = 0;
  std::size_t actions = 0;
  std::size_t mismatches = 0;
  std::string first_mismatch;
  std::string error;  // malformed log
};

/// Re-feeds the recorded events of `actor` to `s` (which must be freshly
/// constructed with the original options) and compares every produced action
/// with the recorded one.
template <typename Session>
ReplayResult replay(std::istream& in, std::string_view actor, Session& s);

namespace detail {

struct Line {
  enum Kind { Start, Event, Action, Other } kind = Other;
  session::Time now = 0;
  nlohmann::json json;
};

bool next_line(std::istream& in, std::string_view actor, Line& line, std::string& error);
void compare_actions(const std::vector<session::Action>& produced, session::Time now,
                     std::string_view actor, std::vector<nlohmann::json>& expected,
                     ReplayResult& r);

}  // namespace detail

template <typename Session>
ReplayResult replay(std::istream& in, std::string_view actor, Session& s) {
  ReplayResult r;
  std::vector<nlohmann::json> expected;
  std::vector<session::Action> produced;
  session::Time produced_at = 0;
  detail::Line line;
  auto flush = [&] {
    detail::compare_actions(produced, produced_at, actor, expected, r);
    produced.clear();
    expected.clear();
  };
  while (detail::next_line(in, actor, line, r.error)) {
    switch (line.kind) {
      case detail::Line::Start:
        flush();
        produced_at = line.now;
        produced = s.start(line.now);
        break;
      case detail::Line::Event: {
        flush();
        auto ev = event_from_json(line.json);
        if (!ev) {
          r.error = ev.error();
          return r;
        }
        ++r.events;
        produced_at = line.now;
        produced = s.on_event(*ev);
        break;
      }
      case detail::Line::Action:
        expected.push_back(line.json);
        break;
      case detail::Line::Other:
        break;
    }
  }
  flush();
  return r;
}

}  // namespace saratoga::trace
