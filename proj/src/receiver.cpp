#include <algorithm>

#include "saratoga/session.hpp"

namespace saratoga::session {

namespace {

constexpr double kTimerSlack = 1e-9;

}  // namespace

ReceiverSession::ReceiverSession(ReceiverOptions opts)
    : opts_(std::move(opts)), session_id_(opts_.session_id), path_(opts_.path) {}

std::optional<u128> ReceiverSession::transfer_size() const {
  if (state_ == ReceiverState::AwaitingMetadata || mode_ == TransferMode::Stream) {
    return std::nullopt;
  }
  return tracker_.expected_size();
}

TransferReport ReceiverSession::report() const {
  const bool ended = state_ == ReceiverState::Complete || state_ == ReceiverState::Failed;
  const Time end = ended ? complete_time_ : last_heard_;
  const u128 dup = bytes_received_ - unique_bytes_;
  return make_report(mode_, unique_bytes_, dup, end - start_time_, status_sent_, digest_ok_,
                     gap_bytes_);
}

std::vector<Action> ReceiverSession::start(Time now) {
  std::vector<Action> out;
  start_time_ = now;
  last_heard_ = now;
  out.push_back(action::SetTimer{TimerId::Idle, now + opts_.cfg.max_idle});
  if (opts_.direction == wire::Direction::Get) {
    wire::PacketHeader h;
    h.session_id = session_id_;
    out.push_back(action::SendPacket{wire::Packet{h, wire::Request{wire::Direction::Get, path_}}, now});
    out.push_back(action::SetTimer{TimerId::Poll, now + opts_.cfg.status_interval});
  }
  return out;
}

std::vector<Action> ReceiverSession::on_event(const Event& e) {
  std::vector<Action> out;
  if (terminated_) return out;
  if (const auto* pa = std::get_if<event::PacketArrived>(&e)) {
    on_packet(pa->packet, pa->now, out);
  } else if (const auto* tf = std::get_if<event::TimerFired>(&e)) {
    on_timer(tf->id, tf->now, out);
  }
  return out;
}

void ReceiverSession::on_packet(const wire::Packet& p, Time now, std::vector<Action>& out) {
  if (session_id_ == 0) session_id_ = p.header.session_id;
  if (p.header.session_id != session_id_) return;
  last_heard_ = now;
  switch (p.type()) {
    case wire::PacketType::Request:
      if (state_ == ReceiverState::AwaitingMetadata) path_ = std::get<wire::Request>(p.body).path;
      break;
    case wire::PacketType::Metadata:
      on_metadata(p, now, out);
      break;
    case wire::PacketType::Data:
      on_data(p, now, out);
      break;
    case wire::PacketType::Status:
      break;
  }
}

void ReceiverSession::on_metadata(const wire::Packet& p, Time now, std::vector<Action>& out) {
  if (state_ != ReceiverState::AwaitingMetadata) {
    // Repeated Metadata means our acknowledgement was lost.
    send_status(now, out);
    return;
  }
  const auto& md = std::get<wire::Metadata>(p.body);
  width_ = p.header.width;
  if (!md.path.empty()) path_ = md.path;
  if (p.header.streaming) {
    mode_ = TransferMode::Stream;
    tracker_ = holes::HoleTracker();
  } else {
    mode_ = TransferMode::File;
    tracker_ = holes::HoleTracker(md.transfer_size);
    expected_digest_ = md.digest;
  }
  state_ = ReceiverState::Receiving;
  out.push_back(action::SetTimer{TimerId::StatusTick, now + opts_.cfg.status_interval});
  check_complete(now, out);
  if (state_ == ReceiverState::Receiving) send_status(now, out);
}

void ReceiverSession::on_data(const wire::Packet& p, Time now, std::vector<Action>& out) {
  if (state_ == ReceiverState::AwaitingMetadata) return;
  if (state_ == ReceiverState::Complete) {
    if (p.header.status_requested || p.header.end_of_data) send_status(now, out);
    return;
  }
  const auto& d = std::get<wire::Data>(p.body);
  const u128 len = d.payload.size();
  if (mode_ == TransferMode::File && (d.offset > *tracker_.expected_size() ||
                                      len > *tracker_.expected_size() - d.offset)) {
    return;  // beyond the announced size
  }
  if (mode_ == TransferMode::Stream && d.offset > kU128Max - len) return;

  bytes_received_ += len;
  if (len > 0) accept(d.offset, d.payload, out);

  if (mode_ == TransferMode::Stream) {
    if (p.header.end_of_data) stream_end_ = d.offset + len;
    abandon_stale_holes(out);
  }

  check_complete(now, out);
  if (state_ != ReceiverState::Receiving) return;
  if (p.header.status_requested) {
    send_status(now, out);
  } else if (p.header.end_of_data && !tracker_.hole_list(1).empty()) {
    send_status(now, out);
  }
}

void ReceiverSession::accept(u128 offset, std::span<const std::uint8_t> bytes,
                             std::vector<Action>& out) {
  const ByteRange range{offset, offset + bytes.size()};
  for (const ByteRange& m : tracker_.missing_within(range)) {
    const auto from = static_cast<std::size_t>(m.start - offset);
    const auto n = static_cast<std::size_t>(m.length());
    std::vector<std::uint8_t> piece(bytes.begin() + static_cast<std::ptrdiff_t>(from),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(from + n));
    unique_bytes_ += n;
    if (mode_ == TransferMode::File) out.push_back(action::WriteSink{m.start, piece});
    reorder_.emplace(m.start, std::move(piece));
  }
  tracker_.mark_received(offset, bytes.size());
  drain(out);
}

void ReceiverSession::drain(std::vector<Action>& out) {
  while (true) {
    auto it = reorder_.find(consumed_);
    if (it != reorder_.end()) {
      if (mode_ == TransferMode::File) {
        digest_.update(it->second);
        consumed_ += it->second.size();
      } else {
        consumed_ += it->second.size();
        out.push_back(action::WriteSink{it->first, std::move(it->second)});
      }
      reorder_.erase(it);
      continue;
    }
    auto gap = gaps_.find(consumed_);
    if (gap != gaps_.end()) {
      consumed_ = gap->second;
      gaps_.erase(gap);
      continue;
    }
    break;
  }
}

void ReceiverSession::abandon_stale_holes(std::vector<Action>& out) {
  const u128 window = opts_.cfg.stream_window;
  const u128 hw = tracker_.high_water();
  bool abandoned = false;
  while (true) {
    const auto first = tracker_.hole_list(1);
    if (first.empty() || hw - first.front().end < window) break;
    const ByteRange h = first.front();
    tracker_.mark_received(h.start, h.length());
    gaps_.emplace(h.start, h.end);
    gap_bytes_ += h.length();
    abandoned = true;
  }
  if (abandoned) drain(out);
}

void ReceiverSession::check_complete(Time now, std::vector<Action>& out) {
  if (state_ != ReceiverState::Receiving) return;
  if (mode_ == TransferMode::File) {
    if (!tracker_.is_complete()) return;
    digest_ok_ = digest_.finish() == expected_digest_;
    if (!digest_ok_) {
      complete_time_ = now;
      fail(FailureReason::DigestMismatch, out);
      return;
    }
  } else {
    if (!stream_end_ || consumed_ != *stream_end_ || tracker_.high_water() > *stream_end_) return;
    digest_ok_ = true;
  }
  state_ = ReceiverState::Complete;
  complete_time_ = now;
  send_status(now, out);
  out.push_back(action::SetTimer{TimerId::Linger, now + opts_.cfg.linger});
}

void ReceiverSession::send_status(Time now, std::vector<Action>& out) {
  wire::PacketHeader h;
  h.session_id = session_id_;
  h.width = width_;
  h.streaming = mode_ == TransferMode::Stream;
  wire::Status st;
  if (state_ == ReceiverState::Complete) {
    h.end_of_data = true;
    st.progress = mode_ == TransferMode::File ? *tracker_.expected_size() : *stream_end_;
  } else {
    st.progress = tracker_.progress();
    st.holes = tracker_.hole_list(opts_.cfg.wire.max_holes_per_status);
  }
  last_status_sent_ = now;
  ++status_sent_;
  out.push_back(action::SendPacket{wire::Packet{h, std::move(st)}, now});
}

void ReceiverSession::on_timer(TimerId id, Time now, std::vector<Action>& out) {
  switch (id) {
    case TimerId::Idle:
      if (state_ == ReceiverState::Complete || state_ == ReceiverState::Failed) break;
      if (now - last_heard_ >= opts_.cfg.max_idle - kTimerSlack) {
        complete_time_ = now;
        fail(FailureReason::IdleTimeout, out);
      } else {
        out.push_back(action::SetTimer{TimerId::Idle, last_heard_ + opts_.cfg.max_idle});
      }
      break;
    case TimerId::Poll:
      if (state_ != ReceiverState::AwaitingMetadata) break;
      {
        wire::PacketHeader h;
        h.session_id = session_id_;
        out.push_back(
            action::SendPacket{wire::Packet{h, wire::Request{wire::Direction::Get, path_}}, now});
        out.push_back(action::SetTimer{TimerId::Poll, now + opts_.cfg.status_interval});
      }
      break;
    case TimerId::StatusTick:
      if (state_ != ReceiverState::Receiving) break;
      if (now - last_status_sent_ >= opts_.cfg.status_interval - kTimerSlack) send_status(now, out);
      out.push_back(action::SetTimer{TimerId::StatusTick, now + opts_.cfg.status_interval});
      break;
    case TimerId::Linger:
      if (state_ != ReceiverState::Complete) break;
      if (now - last_heard_ >= opts_.cfg.linger - kTimerSlack) {
        terminated_ = true;
        out.push_back(action::Finished{report()});
      } else {
        out.push_back(action::SetTimer{TimerId::Linger, last_heard_ + opts_.cfg.linger});
      }
      break;
  }
}

void ReceiverSession::fail(FailureReason why, std::vector<Action>& out) {
  state_ = ReceiverState::Failed;
  terminated_ = true;
  out.push_back(action::Abort{why, report()});
}

}  // namespace saratoga::session
