#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "saratoga/sim.hpp"
#include "saratoga/trace.hpp"

namespace saratoga::sim {

using session::Action;
using session::Event;
using session::Time;

bool config_valid(const TransferConfig& cfg) {
  return netsim::config_valid(cfg.link) && session::config_valid(cfg.session) &&
         cfg.max_duration > 0 && cfg.session_id != 0 && cfg.trace_interval >= 0 &&
         (cfg.pacer.mode == rate::PacerMode::LineRate || cfg.pacer.rate_bps > 0 ||
          cfg.pacer.mode == rate::PacerMode::Tfrc);
}

std::uint8_t stream_byte(std::uint64_t seed, u128 offset) {
  return session::PatternSource(kU128Max, seed).at(offset);
}

namespace {

enum class Side : std::uint8_t { Sender, Receiver };

struct Item {
  enum Kind : std::uint8_t { Deliver, Timer, Transmit, Ready, Feed } kind = Deliver;
  Side side = Side::Sender;  // owner of the timer, transmitter, or recipient
  session::TimerId timer = session::TimerId::Idle;
  std::uint64_t generation = 0;
  bool data = false;
  std::vector<std::uint8_t> bytes;
  std::optional<wire::Packet> packet;
};

Item make_item(Item::Kind kind, Side side = Side::Sender) {
  Item it;
  it.kind = kind;
  it.side = side;
  return it;
}

TransferFailed invalid_config() {
  TransferFailed f;
  f.reason = session::FailureReason::ProtocolViolation;
  return f;
}

std::string_view actor(Side s) { return s == Side::Sender ? "sender" : "receiver"; }

netsim::SimLinkConfig reverse_of(const netsim::SimLinkConfig& fwd) {
  netsim::SimLinkConfig rev = fwd;
  rev.seed = netsim::mix_seed(fwd.seed, 1);
  return rev;
}

/// Shared event loop for file and stream runs.
class Harness {
 public:
  Harness(const TransferConfig& cfg, session::SenderSession& snd, session::ReceiverSession& rcv)
      : cfg_(cfg), snd_(snd), rcv_(rcv), fwd_(cfg.link), rev_(reverse_of(cfg.link)) {}

  std::function<void(const session::action::WriteSink&)> on_write;
  std::function<void(Time)> on_feed;  // stream runs schedule Feed items

  void schedule_feed(Time t) { q_.push(t, make_item(Item::Feed)); }

  void start() {
    log_start(Side::Receiver, 0.0);
    apply(Side::Receiver, 0.0, rcv_.start(0.0), false);
    log_start(Side::Sender, 0.0);
    apply(Side::Sender, 0.0, snd_.start(0.0), false);
  }

  /// Runs until both sessions terminate, one aborts, or time runs out.
  void run() {
    while (!q_.empty() && !failure_ && !(snd_.terminated() && rcv_.terminated())) {
      if (q_.next_time() > cfg_.max_duration) {
        failure_ = session::FailureReason::MaxDuration;
        fail_time_ = cfg_.max_duration;
        break;
      }
      auto entry = q_.pop();
      step(entry.time, std::move(entry.item));
    }
    end_time_ = q_.now();
    if (!failure_ && !(snd_.terminated() && rcv_.terminated())) {
      failure_ = session::FailureReason::MaxDuration;
      fail_time_ = end_time_;
    }
  }

  std::optional<session::FailureReason> failure() const { return failure_; }
  Time fail_time() const { return fail_time_; }
  Time end_time() const { return end_time_; }
  const session::TransferReport& sender_report() const { return snd_report_; }
  const session::TransferReport& receiver_report() const { return rcv_report_; }
  bool receiver_finished() const { return rcv_finished_; }
  bool sender_finished() const { return snd_finished_; }
  const netsim::SimLink& forward() const { return fwd_; }
  const netsim::SimLink& reverse() const { return rev_; }
  std::uint64_t data_packets() const { return data_packets_; }

  void feed(Time now, std::vector<std::uint8_t> bytes, bool end) {
    deliver_event(Side::Sender, Event{session::event::StreamData{std::move(bytes), end, now}});
  }

  std::vector<RateSample> trace() const {
    std::vector<RateSample> out;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      out.push_back(RateSample{static_cast<double>(i) * cfg_.trace_interval,
                               bins_[i].first * 8.0 / cfg_.trace_interval, bins_[i].second});
    }
    return out;
  }

 private:
  void step(Time t, Item item) {
    switch (item.kind) {
      case Item::Deliver: {
        auto p = wire::decode_packet(item.bytes, cfg_.session.wire);
        if (!p) break;  // receivers never see undecodable datagrams
        deliver_event(item.side, Event{session::event::PacketArrived{std::move(p).value(), t}});
        break;
      }
      case Item::Timer: {
        auto& slot = timers_[index(item.side)][static_cast<std::size_t>(item.timer)];
        if (slot != item.generation) break;  // superseded
        deliver_event(item.side, Event{session::event::TimerFired{item.timer, t}});
        break;
      }
      case Item::Transmit:
        transmit(item.side, t, *item.packet, item.data);
        break;
      case Item::Ready:
        ready_pending_ = false;
        deliver_event(Side::Sender, Event{session::event::TransmitReady{t}});
        break;
      case Item::Feed:
        if (on_feed) on_feed(t);
        break;
    }
  }

  static std::size_t index(Side s) { return s == Side::Sender ? 0 : 1; }

  void deliver_event(Side side, const Event& e) {
    if (cfg_.trace_log) trace::write_line(*cfg_.trace_log, trace::event_to_json(actor(side), e));
    const bool ready = std::holds_alternative<session::event::TransmitReady>(e);
    auto actions = side == Side::Sender ? snd_.on_event(e) : rcv_.on_event(e);
    apply(side, session::event_time(e), std::move(actions), ready);
  }

  void log_start(Side side, Time now) {
    if (cfg_.trace_log) trace::write_line(*cfg_.trace_log, trace::start_to_json(actor(side), now));
  }

  void apply(Side side, Time now, std::vector<Action> actions, bool from_ready) {
    for (Action& a : actions) {
      if (cfg_.trace_log) {
        trace::write_line(*cfg_.trace_log, trace::action_to_json(actor(side), now, a));
      }
      if (auto* sp = std::get_if<session::action::SendPacket>(&a)) {
        const bool data = from_ready && sp->packet.type() == wire::PacketType::Data;
        if (data) ready_pending_ = true;
        if (sp->earliest <= now) {
          transmit(side, now, sp->packet, data);
        } else {
          Item it = make_item(Item::Transmit, side);
          it.data = data;
          it.packet = std::move(sp->packet);
          q_.push(sp->earliest, std::move(it));
        }
      } else if (auto* st = std::get_if<session::action::SetTimer>(&a)) {
        auto& slot = timers_[index(side)][static_cast<std::size_t>(st->id)];
        Item it = make_item(Item::Timer, side);
        it.timer = st->id;
        it.generation = ++slot;
        q_.push(std::max(now, st->deadline), std::move(it));
      } else if (auto* ws = std::get_if<session::action::WriteSink>(&a)) {
        if (on_write) on_write(*ws);
      } else if (auto* fin = std::get_if<session::action::Finished>(&a)) {
        (side == Side::Sender ? snd_report_ : rcv_report_) = fin->report;
        (side == Side::Sender ? snd_finished_ : rcv_finished_) = true;
      } else if (auto* ab = std::get_if<session::action::Abort>(&a)) {
        (side == Side::Sender ? snd_report_ : rcv_report_) = ab->report;
        if (!failure_) {
          failure_ = ab->reason;
          fail_time_ = now;
        }
      }
    }
    if (side == Side::Sender && !from_ready && !ready_pending_ && !snd_.terminated()) {
      ready_pending_ = true;
      q_.push(std::max(now, fwd_.idle_at()), make_item(Item::Ready));
    }
  }

  void transmit(Side from, Time t, const wire::Packet& p, bool data) {
    auto bytes = wire::encode_packet(p, cfg_.session.wire);
    if (!bytes) {
      // A session produced a packet its own configuration rejects.
      failure_ = session::FailureReason::ProtocolViolation;
      fail_time_ = t;
      return;
    }
    netsim::SimLink& link = from == Side::Sender ? fwd_ : rev_;
    if (from == Side::Sender && cfg_.trace_interval > 0) {
      const auto bin = static_cast<std::size_t>(t / cfg_.trace_interval);
      if (bins_.size() <= bin) bins_.resize(bin + 1, {0.0, 0.0});
      bins_[bin].second = std::max(bins_[bin].second, static_cast<double>(link.occupancy(t)));
      bins_[bin].first += static_cast<double>(bytes->size() + link.config().overhead_bytes);
    }
    const netsim::LinkResult res = link.send(bytes->size(), t);
    if (data) {
      ++data_packets_;
      q_.push(std::max(t, link.idle_at()), make_item(Item::Ready));
    }
    if (res.outcome != netsim::LinkOutcome::Delivered) return;
    Item it = make_item(Item::Deliver, from == Side::Sender ? Side::Receiver : Side::Sender);
    it.bytes = std::move(bytes).value();
    q_.push(res.arrival, std::move(it));
  }

  const TransferConfig& cfg_;
  session::SenderSession& snd_;
  session::ReceiverSession& rcv_;
  netsim::SimLink fwd_;
  netsim::SimLink rev_;
  netsim::EventQueue<Item> q_;
  std::array<std::array<std::uint64_t, 4>, 2> timers_{};
  bool ready_pending_ = false;
  std::optional<session::FailureReason> failure_;
  Time fail_time_ = 0;
  Time end_time_ = 0;
  session::TransferReport snd_report_;
  session::TransferReport rcv_report_;
  bool snd_finished_ = false;
  bool rcv_finished_ = false;
  std::uint64_t data_packets_ = 0;
  std::vector<std::pair<double, double>> bins_;  // (bytes, max queue)
};

TransferFailed failed(const Harness& h) {
  return TransferFailed{*h.failure(), h.fail_time(), h.sender_report(), h.receiver_report()};
}

}  // namespace

Expected<TransferOutcome, TransferFailed> run_transfer(
    const TransferConfig& cfg, std::shared_ptr<const session::ByteSource> file) {
  if (!config_valid(cfg) || !file) {
    return unexpected(invalid_config());
  }
  session::SenderOptions so;
  so.session_id = cfg.session_id;
  so.mode = session::TransferMode::File;
  so.direction = cfg.direction;
  so.path = cfg.path;
  so.source = file;
  so.digest = session::digest_of(*file);
  so.cfg = cfg.session;
  session::SenderSession snd(so, rate::make_pacer(cfg.pacer, cfg.session.wire.max_payload,
                                                  cfg.link.rate_bps));

  session::ReceiverOptions ro;
  ro.direction = cfg.direction;
  ro.path = cfg.path;
  ro.session_id = cfg.direction == wire::Direction::Get ? cfg.session_id : 0;
  ro.cfg = cfg.session;
  session::ReceiverSession rcv(ro);

  Harness h(cfg, snd, rcv);
  u128 written = 0;
  bool matches = true;
  std::vector<std::uint8_t> expect;
  h.on_write = [&](const session::action::WriteSink& w) {
    expect.resize(w.bytes.size());
    if (w.offset > file->size() || w.bytes.size() > file->size() - w.offset) {
      matches = false;
      return;
    }
    file->read(w.offset, expect);
    if (expect != w.bytes) matches = false;
    written += w.bytes.size();
  };
  h.start();
  h.run();
  if (h.failure()) return unexpected(failed(h));

  TransferOutcome out;
  out.sender = h.sender_report();
  out.receiver = h.receiver_report();
  out.completion_time = out.receiver.duration;
  out.end_time = h.end_time();
  out.forward = h.forward().counters();
  out.reverse = h.reverse().counters();
  out.data_packets = h.data_packets();
  out.sink_matches = matches && written == file->size();
  out.trace = h.trace();
  return out;
}

Expected<StreamOutcome, TransferFailed> run_stream(const TransferConfig& cfg,
                                                   const StreamFeed& feed, double duration) {
  if (!config_valid(cfg) || feed.rate_bps < 0 || feed.chunk_interval <= 0 || duration < 0) {
    return unexpected(invalid_config());
  }
  session::SenderOptions so;
  so.session_id = cfg.session_id;
  so.mode = session::TransferMode::Stream;
  so.direction = wire::Direction::Put;
  so.path = cfg.path;
  so.cfg = cfg.session;
  session::SenderSession snd(so, rate::make_pacer(cfg.pacer, cfg.session.wire.max_payload,
                                                  cfg.link.rate_bps));
  session::ReceiverOptions ro;
  ro.cfg = cfg.session;
  session::ReceiverSession rcv(ro);

  Harness h(cfg, snd, rcv);
  StreamOutcome out;
  u128 delivered_end = 0;
  h.on_write = [&](const session::action::WriteSink& w) {
    if (w.offset < delivered_end) {
      out.in_order = false;
      return;
    }
    out.skipped_bytes += w.offset - delivered_end;
    for (std::size_t i = 0; i < w.bytes.size(); ++i) {
      if (w.bytes[i] != stream_byte(feed.seed, w.offset + i)) ++out.mismatched_bytes;
    }
    out.delivered_bytes += w.bytes.size();
    delivered_end = w.offset + w.bytes.size();
  };

  // Fractional bytes carry over between chunks so the long-run rate is exact.
  double owed = 0.0;
  std::uint64_t chunk = 0;
  h.on_feed = [&](Time now) {
    const bool last = now >= duration;
    owed += feed.rate_bps / 8.0 * feed.chunk_interval;
    const auto n = last ? std::size_t{0} : static_cast<std::size_t>(std::floor(owed));
    owed -= static_cast<double>(n);
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = stream_byte(feed.seed, out.source_bytes + i);
    out.source_bytes += n;
    h.feed(now, std::move(bytes), last);
    if (!last) {
      ++chunk;
      h.schedule_feed(std::min(duration, static_cast<double>(chunk) * feed.chunk_interval));
    }
  };
  h.start();
  h.schedule_feed(0.0);
  h.run();
  if (h.failure()) return unexpected(failed(h));
  out.sender = h.sender_report();
  out.receiver = h.receiver_report();
  out.end_time = h.end_time();
  return out;
}

}  // namespace saratoga::sim
