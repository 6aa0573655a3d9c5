#include <algorithm>

#include "saratoga/session.hpp"

namespace saratoga::session {

namespace {

constexpr double kTimerSlack = 1e-9;
constexpr std::size_t kMaxOutstandingSolicits = 64;
// Retransmit guard before any round-trip sample, seconds.
constexpr double kInitialGuard = 1.0;

// True when the Status proves byte `b` has arrived. Hole lists are sorted and
// may be truncated, so only bytes below progress or below some listed hole
// are known.
bool shows_received(const wire::Status& st, u128 b) {
  if (b < st.progress) return true;
  for (const ByteRange& h : st.holes) {
    if (b < h.start) return true;
    if (b < h.end) return false;
  }
  return false;
}

}  // namespace

SenderSession::SenderSession(SenderOptions opts, rate::Pacer pacer)
    : opts_(std::move(opts)), pacer_(std::move(pacer)) {
  width_ = opts_.mode == TransferMode::File ? wire::select_descriptor_width(opts_.source->size())
                                            : opts_.cfg.stream_width;
}

wire::PacketHeader SenderSession::header() const {
  wire::PacketHeader h;
  h.session_id = opts_.session_id;
  h.width = width_;
  h.streaming = opts_.mode == TransferMode::Stream;
  return h;
}

u128 SenderSession::data_end() const {
  return opts_.mode == TransferMode::File ? opts_.source->size() : appended_end_;
}

bool SenderSession::all_new_data_sent() const {
  if (opts_.mode == TransferMode::File) return cursor_ == opts_.source->size();
  return stream_closed_ && cursor_ == appended_end_;
}

TransferReport SenderSession::report(Time now) const {
  return make_report(opts_.mode, unique_bytes_, retransmitted_bytes_, now - start_time_,
                     status_packets_, state_ == SenderState::Done);
}

std::vector<Action> SenderSession::start(Time now) {
  std::vector<Action> out;
  start_time_ = now;
  last_heard_ = now;
  out.push_back(action::SetTimer{TimerId::Idle, now + opts_.cfg.max_idle});
  if (opts_.direction == wire::Direction::Put) {
    state_ = SenderState::Transferring;
    send_opening(now, out);
    out.push_back(action::SetTimer{TimerId::Poll, now + opts_.cfg.status_interval});
    if (all_new_data_sent()) state_ = SenderState::Draining;
  } else {
    state_ = SenderState::AwaitingRequest;
  }
  return out;
}

std::vector<Action> SenderSession::on_event(const Event& e) {
  std::vector<Action> out;
  if (terminated_) return out;
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, event::PacketArrived>) {
          on_packet(ev.packet, ev.now, out);
        } else if constexpr (std::is_same_v<T, event::TimerFired>) {
          on_timer(ev.id, ev.now, out);
        } else if constexpr (std::is_same_v<T, event::StreamData>) {
          on_stream_data(ev, out);
        } else {
          transmit(ev.now, out);
        }
      },
      e);
  return out;
}

void SenderSession::send_opening(Time now, std::vector<Action>& out) {
  if (opts_.direction == wire::Direction::Put) {
    wire::Packet req{header(), wire::Request{wire::Direction::Put, opts_.path}};
    out.push_back(action::SendPacket{std::move(req), now});
  }
  wire::Metadata md;
  md.path = opts_.path;
  if (opts_.mode == TransferMode::File) {
    md.transfer_size = opts_.source->size();
    md.digest = opts_.digest;
  } else {
    md.transfer_size = kU128Max;
  }
  out.push_back(action::SendPacket{wire::Packet{header(), std::move(md)}, now});
}

void SenderSession::send_poll(Time now, std::vector<Action>& out) {
  wire::PacketHeader h = header();
  h.status_requested = true;
  h.end_of_data = all_new_data_sent();
  last_solicit_ = now;
  out.push_back(action::SendPacket{wire::Packet{h, wire::Data{cursor_, {}}}, now});
}

void SenderSession::on_packet(const wire::Packet& p, Time now, std::vector<Action>& out) {
  if (const auto* req = std::get_if<wire::Request>(&p.body)) {
    if (req->direction != wire::Direction::Get) return;
    if (state_ == SenderState::AwaitingRequest) {
      opts_.session_id = p.header.session_id;
      last_heard_ = now;
      state_ = SenderState::Transferring;
      send_opening(now, out);
      out.push_back(action::SetTimer{TimerId::Poll, now + opts_.cfg.status_interval});
      if (all_new_data_sent()) state_ = SenderState::Draining;
    } else if (p.header.session_id == opts_.session_id && !heard_status_) {
      // Our Metadata was lost.
      last_heard_ = now;
      send_opening(now, out);
    }
    return;
  }
  if (p.type() == wire::PacketType::Status) on_status(p, now, out);
}

void SenderSession::on_status(const wire::Packet& p, Time now, std::vector<Action>& out) {
  if (p.header.session_id != opts_.session_id) {
    fail(FailureReason::ProtocolViolation, now, out);
    return;
  }
  if (state_ != SenderState::Transferring && state_ != SenderState::Draining) return;
  const auto& st = std::get<wire::Status>(p.body);
  heard_status_ = true;
  last_heard_ = now;
  ++status_packets_;

  // The newest answered solicitation gives the round-trip sample; older ones
  // are answered implicitly or were lost.
  double sample = 0;
  for (auto it = solicits_.rbegin(); it != solicits_.rend(); ++it) {
    if (shows_received(st, it->second - 1)) {
      sample = now - it->first;
      srtt_ = srtt_ ? 0.875 * *srtt_ + 0.125 * sample : sample;
      solicits_.erase(solicits_.begin(), it.base());
      break;
    }
  }

  if (st.holes.empty()) {
    const bool file_done =
        opts_.mode == TransferMode::File && st.progress == opts_.source->size();
    const bool stream_done = opts_.mode == TransferMode::Stream && p.header.end_of_data &&
                             all_new_data_sent() && st.progress == appended_end_;
    if (file_done || stream_done) {
      finish(now, out);
      return;
    }
  }

  const std::vector<ByteRange> repair = eligible(st.holes, now);
  retransmit_.assign(repair.begin(), repair.end());

  if (pacer_.mode() == rate::PacerMode::Tfrc) {
    u128 new_lost = 0;
    for (const ByteRange& r : repair) {
      for (const ByteRange& m : counted_lost_.missing_within(r)) new_lost += m.length();
      counted_lost_.mark_received(r.start, r.length());
    }
    std::uint64_t events = 0;
    if (new_lost > 0 && (!last_loss_event_ || now - *last_loss_event_ >= srtt_.value_or(0))) {
      events = 1;
      last_loss_event_ = now;
    }
    pacer_.on_feedback(sample, events, packets_since_feedback_);
  }
  packets_since_feedback_ = 0;

  // Records older than several guard periods are treated as old; dropping
  // them bounds the log.
  const Time horizon = now - 8 * retransmit_guard();
  while (!send_order_.empty() && send_order_.front().first < horizon) {
    auto it = send_log_.find(send_order_.front().second);
    if (it != send_log_.end() && it->second.at == send_order_.front().first) send_log_.erase(it);
    send_order_.pop_front();
  }
}

double SenderSession::retransmit_guard() const {
  if (!srtt_) return std::max(kInitialGuard, 2 * opts_.cfg.status_interval);
  return 1.25 * *srtt_ + 0.002;
}

std::vector<ByteRange> SenderSession::eligible(const std::vector<ByteRange>& holes,
                                               Time now) const {
  // A hole is repaired only if its bytes were last sent more than a round
  // trip ago; younger bytes may still be in flight.
  std::vector<ByteRange> out;
  auto add = [&](u128 a, u128 b) {
    if (a >= b) return;
    if (!out.empty() && out.back().end == a) {
      out.back().end = b;
    } else {
      out.push_back({a, b});
    }
  };
  const u128 lo = opts_.mode == TransferMode::Stream ? buffer_base_ : 0;
  const u128 hi = cursor_;
  const Time threshold = now - retransmit_guard();
  for (const ByteRange& h : holes) {
    const u128 a = std::max(h.start, lo);
    const u128 b = std::min(h.end, hi);
    if (a >= b) continue;
    u128 pos = a;
    auto it = send_log_.upper_bound(a);
    if (it != send_log_.begin()) {
      auto prev = std::prev(it);
      if (prev->second.end > a) it = prev;
    }
    for (; it != send_log_.end() && it->first < b && pos < b; ++it) {
      const u128 s = it->first;
      const u128 e = it->second.end;
      if (e <= pos) continue;
      if (s > pos) add(pos, s);
      const u128 seg_start = std::max(s, pos);
      const u128 seg_end = std::min(e, b);
      if (it->second.at <= threshold) add(seg_start, seg_end);
      pos = seg_end;
    }
    if (pos < b) add(pos, b);
  }
  return out;
}

void SenderSession::record_send(ByteRange r, Time at) {
  auto it = send_log_.lower_bound(r.start);
  if (it != send_log_.begin()) {
    auto prev = std::prev(it);
    if (prev->second.end > r.start) {
      if (prev->second.end > r.end) send_log_.emplace(r.end, SentRecord{prev->second.end, prev->second.at});
      prev->second.end = r.start;
    }
  }
  it = send_log_.lower_bound(r.start);
  while (it != send_log_.end() && it->first < r.end) {
    if (it->second.end > r.end) {
      const SentRecord tail{it->second.end, it->second.at};
      it = send_log_.erase(it);
      send_log_.emplace_hint(it, r.end, tail);
      break;
    }
    it = send_log_.erase(it);
  }
  send_log_[r.start] = SentRecord{r.end, at};
  send_order_.emplace_back(at, r.start);
}

void SenderSession::read_bytes(u128 offset, std::span<std::uint8_t> out) const {
  if (opts_.mode == TransferMode::File) {
    opts_.source->read(offset, out);
    return;
  }
  const auto start = static_cast<std::size_t>(offset - buffer_base_);
  std::copy_n(buffer_.begin() + static_cast<std::ptrdiff_t>(start), out.size(), out.begin());
}

void SenderSession::transmit(Time now, std::vector<Action>& out) {
  if (state_ != SenderState::Transferring && state_ != SenderState::Draining) return;
  const u128 max_payload = opts_.cfg.wire.max_payload;

  ByteRange r;
  bool retransmission = false;
  while (!retransmit_.empty()) {
    ByteRange& front = retransmit_.front();
    if (opts_.mode == TransferMode::Stream) {
      if (front.end <= buffer_base_) {
        retransmit_.pop_front();
        continue;
      }
      front.start = std::max(front.start, buffer_base_);
    }
    r = {front.start, std::min(front.end, front.start + max_payload)};
    front.start = r.end;
    if (front.empty()) retransmit_.pop_front();
    retransmission = true;
    break;
  }
  if (!retransmission) {
    const u128 end = data_end();
    if (cursor_ >= end) {
      if (all_new_data_sent()) state_ = SenderState::Draining;
      return;
    }
    r = {cursor_, std::min(end, cursor_ + max_payload)};
  }

  const auto len = static_cast<std::size_t>(r.length());
  wire::Data data{r.start, std::vector<std::uint8_t>(len)};
  read_bytes(r.start, data.payload);

  if (!retransmission) cursor_ = r.end;
  const bool final_packet = !retransmission && all_new_data_sent();

  wire::PacketHeader h = header();
  h.end_of_data = final_packet;
  h.status_requested =
      final_packet || now - last_solicit_ >= opts_.cfg.status_interval - kTimerSlack;
  wire::Packet pkt{h, std::move(data)};
  const Time at = pacer_.earliest_send(wire::encoded_size(pkt), now);

  if (h.status_requested) {
    last_solicit_ = at;
    // Retransmitted bytes may be acknowledged by an earlier copy, so only new
    // data yields round-trip samples.
    if (len > 0 && !retransmission) solicits_.emplace_back(at, r.end);
    if (solicits_.size() > kMaxOutstandingSolicits) solicits_.pop_front();
  }
  record_send(r, at);
  if (retransmission) {
    retransmitted_bytes_ += len;
  } else {
    unique_bytes_ += len;
  }
  ++packets_since_feedback_;
  out.push_back(action::ReadSource{r.start, len});
  out.push_back(action::SendPacket{std::move(pkt), at});

  if (state_ == SenderState::Transferring && all_new_data_sent()) state_ = SenderState::Draining;

  if (opts_.mode == TransferMode::Stream) {
    const u128 window = opts_.cfg.stream_window;
    const u128 keep_from = cursor_ > window ? cursor_ - window : 0;
    if (keep_from > buffer_base_) {
      const auto drop = static_cast<std::size_t>(keep_from - buffer_base_);
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(drop));
      buffer_base_ = keep_from;
    }
  }
}

void SenderSession::on_timer(TimerId id, Time now, std::vector<Action>& out) {
  const bool active = state_ == SenderState::AwaitingRequest ||
                      state_ == SenderState::Transferring || state_ == SenderState::Draining;
  if (!active) return;
  switch (id) {
    case TimerId::Idle:
      if (now - last_heard_ >= opts_.cfg.max_idle - kTimerSlack) {
        fail(FailureReason::IdleTimeout, now, out);
      } else {
        out.push_back(action::SetTimer{TimerId::Idle, last_heard_ + opts_.cfg.max_idle});
      }
      break;
    case TimerId::Poll:
      if (state_ == SenderState::AwaitingRequest) break;
      if (!heard_status_) send_opening(now, out);
      if (retransmit_.empty() && now - last_solicit_ >= opts_.cfg.status_interval - kTimerSlack) {
        send_poll(now, out);
      }
      out.push_back(action::SetTimer{TimerId::Poll, now + opts_.cfg.status_interval});
      break;
    default:
      break;
  }
}

void SenderSession::on_stream_data(const event::StreamData& d, std::vector<Action>& out) {
  if (opts_.mode != TransferMode::Stream || stream_closed_) return;
  buffer_.insert(buffer_.end(), d.bytes.begin(), d.bytes.end());
  appended_end_ += d.bytes.size();
  if (d.end_of_stream) stream_closed_ = true;
  if (appended_end_ - cursor_ > opts_.cfg.stream_window) {
    fail(FailureReason::SourceOverrun, d.now, out);
  }
}

void SenderSession::finish(Time now, std::vector<Action>& out) {
  state_ = SenderState::Done;
  terminated_ = true;
  out.push_back(action::Finished{report(now)});
}

void SenderSession::fail(FailureReason why, Time now, std::vector<Action>& out) {
  state_ = SenderState::Failed;
  terminated_ = true;
  out.push_back(action::Abort{why, report(now)});
}

}  // namespace saratoga::session
