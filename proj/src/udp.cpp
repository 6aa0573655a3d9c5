#include "saratoga/udp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <queue>

#include "saratoga/trace.hpp"

namespace saratoga::udp {

Fd& Fd::operator=(Fd&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.release();
  }
  return *this;
}

Fd::~Fd() {
  if (fd_ >= 0) ::close(fd_);
}

Expected<Address, std::string> resolve(const std::string& text, std::uint16_t default_port) {
  std::string host = text;
  std::string port = std::to_string(default_port);
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string::npos) return unexpected("bad address '" + text + "'");
    host = text.substr(1, close - 1);
    if (close + 1 < text.size()) {
      if (text[close + 1] != ':') return unexpected("bad address '" + text + "'");
      port = text.substr(close + 2);
    }
  } else if (const auto colon = text.rfind(':');
             colon != std::string::npos && text.find(':') == colon) {
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  addrinfo hints{};
  hints.ai_socktype = SOCK_DGRAM;
  hints.ai_family = AF_UNSPEC;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) return unexpected("cannot resolve '" + text + "': " + ::gai_strerror(rc));
  Address a;
  std::memcpy(&a.storage, res->ai_addr, res->ai_addrlen);
  a.len = res->ai_addrlen;
  ::freeaddrinfo(res);
  return a;
}

std::string to_string(const Address& a) {
  char host[NI_MAXHOST];
  char serv[NI_MAXSERV];
  if (::getnameinfo(reinterpret_cast<const sockaddr*>(&a.storage), a.len, host, sizeof host, serv,
                    sizeof serv, NI_NUMERICHOST | NI_NUMERICSERV) != 0) {
    return "?";
  }
  return a.storage.ss_family == AF_INET6 ? "[" + std::string(host) + "]:" + serv
                                         : std::string(host) + ":" + serv;
}

namespace {

bool same_address(const Address& a, const sockaddr_storage& b, socklen_t len) {
  return a.len == len && std::memcmp(&a.storage, &b, len) == 0;
}

void enlarge_buffers(int fd) {
  const int size = 8 << 20;
  // The FORCE variants exceed the sysctl cap when privileged.
  if (::setsockopt(fd, SOL_SOCKET, SO_RCVBUFFORCE, &size, sizeof size) != 0) {
    ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &size, sizeof size);
  }
  if (::setsockopt(fd, SOL_SOCKET, SO_SNDBUFFORCE, &size, sizeof size) != 0) {
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &size, sizeof size);
  }
}

}  // namespace

Expected<Fd, std::string> open_socket(const std::string& bind_addr, std::uint16_t port,
                                      int family) {
  Fd fd(::socket(family, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!fd) return unexpected(std::string("socket: ") + std::strerror(errno));
  auto addr = resolve(bind_addr.find(':') != std::string::npos && family == AF_INET6
                          ? "[" + bind_addr + "]"
                          : bind_addr,
                      port);
  if (!addr) return unexpected(addr.error());
  if (addr->storage.ss_family != family) {
    return unexpected("bind address '" + bind_addr + "' has the wrong family");
  }
  const int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr->storage), addr->len) != 0) {
    return unexpected("bind " + bind_addr + ":" + std::to_string(port) + ": " +
                      std::strerror(errno));
  }
  enlarge_buffers(fd.get());
  return fd;
}

std::uint16_t local_port(int fd) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len) != 0) return 0;
  if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
}

Expected<std::shared_ptr<FileSource>, std::string> FileSource::open(const std::string& path) {
  Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (!fd) return unexpected("open " + path + ": " + std::strerror(errno));
  struct stat st{};
  if (::fstat(fd.get(), &st) != 0) return unexpected("stat " + path + ": " + std::strerror(errno));
  if (!S_ISREG(st.st_mode)) return unexpected(path + " is not a regular file");
  return std::shared_ptr<FileSource>(
      new FileSource(std::move(fd), static_cast<std::uint64_t>(st.st_size)));
}

void FileSource::read(u128 offset, std::span<std::uint8_t> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::pread(fd_.get(), out.data() + done, out.size() - done,
                              static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      // The file shrank underneath us; the digest check will catch it.
      std::memset(out.data() + done, 0, out.size() - done);
      return;
    }
    done += static_cast<std::size_t>(n);
  }
}

namespace {

using session::Action;
using session::Event;
using session::Time;

constexpr std::size_t kRecvBurst = 256;
constexpr std::size_t kSendBurst = 32;
constexpr std::size_t kStreamChunk = 64 * 1024;

class Loop {
 public:
  Loop(int sock, std::optional<Address> peer, const wire::WireConfig& wire,
       const LoopOptions& opts, session::SenderSession* snd, session::ReceiverSession* rcv)
      : sock_(sock), peer_(std::move(peer)), wire_(wire), opts_(opts), snd_(snd), rcv_(rcv),
        t0_(std::chrono::steady_clock::now()), rx_(wire::kMaxDatagram + 1) {}

  int stream_input = -1;
  int sink_fd = -1;

  Expected<LoopResult, std::string> run() {
    log(trace::start_to_json(actor(), 0.0));
    apply(snd_ ? snd_->start(0.0) : rcv_->start(0.0), 0.0, false);
    while (!done_ && error_.empty()) {
      const Time t = now();
      if (opts_.max_duration > 0 && t > opts_.max_duration) {
        result_.failure = session::FailureReason::MaxDuration;
        result_.report = snd_ ? snd_->report(t) : rcv_->report();
        break;
      }
      receive();
      fire_timers();
      flush_paced();
      read_stream_input(false);
      offer_transmit();
      if (done_ || !error_.empty()) break;
      wait();
    }
    result_.elapsed = now();
    if (!error_.empty()) return unexpected(error_);
    return result_;
  }

 private:
  struct Pending {
    Time at;
    std::uint64_t seq;
    std::vector<std::uint8_t> bytes;
    bool data;
    bool operator>(const Pending& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  std::string_view actor() const { return snd_ ? "sender" : "receiver"; }

  Time now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

  void log(const nlohmann::json& j) {
    if (opts_.trace_log) trace::write_line(*opts_.trace_log, j);
  }

  void dispatch(const Event& e) {
    log(trace::event_to_json(actor(), e));
    const bool ready = std::holds_alternative<session::event::TransmitReady>(e);
    if (!ready) want_ready_ = true;
    apply(snd_ ? snd_->on_event(e) : rcv_->on_event(e), session::event_time(e), ready);
  }

  void apply(std::vector<Action> actions, Time t, bool from_ready) {
    for (Action& a : actions) {
      log(trace::action_to_json(actor(), t, a));
      if (auto* sp = std::get_if<session::action::SendPacket>(&a)) {
        auto bytes = wire::encode_packet(sp->packet, wire_);
        if (!bytes) {
          error_ = "session produced an unencodable packet: " +
                   std::string(wire::to_string(bytes.error()));
          return;
        }
        const bool data = from_ready && sp->packet.type() == wire::PacketType::Data;
        if (data) produced_data_ = true;
        if (sp->earliest <= now()) {
          send_now(std::move(bytes).value());
        } else {
          if (data) data_pending_ = true;
          paced_.push(Pending{sp->earliest, seq_++, std::move(bytes).value(), data});
        }
      } else if (auto* st = std::get_if<session::action::SetTimer>(&a)) {
        timers_[static_cast<std::size_t>(st->id)] = st->deadline;
      } else if (auto* ws = std::get_if<session::action::WriteSink>(&a)) {
        write_sink(*ws);
      } else if (auto* fin = std::get_if<session::action::Finished>(&a)) {
        result_.report = fin->report;
        done_ = true;
      } else if (auto* ab = std::get_if<session::action::Abort>(&a)) {
        result_.report = ab->report;
        result_.failure = ab->reason;
        done_ = true;
      }
    }
  }

  void write_sink(const session::action::WriteSink& w) {
    if (sink_fd < 0) return;
    std::size_t done = 0;
    while (done < w.bytes.size()) {
      const ssize_t n = ::pwrite(sink_fd, w.bytes.data() + done, w.bytes.size() - done,
                                 static_cast<off_t>(w.offset + done));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        error_ = std::string("write: ") + std::strerror(errno);
        return;
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void send_now(std::vector<std::uint8_t> bytes) {
    if (!blocked_.empty() || !peer_) {
      blocked_.push_back(std::move(bytes));
      return;
    }
    if (!try_send(bytes)) blocked_.push_back(std::move(bytes));
  }

  bool try_send(const std::vector<std::uint8_t>& bytes) {
    while (true) {
      const ssize_t n = ::sendto(sock_, bytes.data(), bytes.size(), 0,
                                 reinterpret_cast<const sockaddr*>(&peer_->storage), peer_->len);
      if (n >= 0) {
        ++result_.datagrams_sent;
        result_.wire_bytes_sent += bytes.size();
        return true;
      }
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) return false;
      // ENOBUFS, ECONNREFUSED and friends: the datagram is lost, as on a
      // real path.
      return true;
    }
  }

  void flush_blocked() {
    while (!blocked_.empty() && peer_) {
      if (!try_send(blocked_.front())) return;
      blocked_.pop_front();
    }
  }

  void receive() {
    for (std::size_t i = 0; i < kRecvBurst && !done_; ++i) {
      sockaddr_storage from{};
      socklen_t len = sizeof from;
      const ssize_t n = ::recvfrom(sock_, rx_.data(), rx_.size(), 0,
                                   reinterpret_cast<sockaddr*>(&from), &len);
      if (n < 0) {
        if (errno == EINTR) continue;
        return;  // EAGAIN, or a transient ICMP error
      }
      ++result_.datagrams_received;
      if (peer_ && !same_address(*peer_, from, len)) continue;
      auto p = wire::decode_packet(std::span(rx_.data(), static_cast<std::size_t>(n)), wire_);
      if (!p) continue;
      if (!peer_) {
        Address a;
        std::memcpy(&a.storage, &from, len);
        a.len = len;
        peer_ = a;
      }
      dispatch(Event{session::event::PacketArrived{std::move(p).value(), now()}});
    }
  }

  void fire_timers() {
    for (std::size_t i = 0; i < timers_.size() && !done_; ++i) {
      if (timers_[i] && *timers_[i] <= now()) {
        timers_[i].reset();
        dispatch(Event{session::event::TimerFired{static_cast<session::TimerId>(i), now()}});
      }
    }
  }

  void flush_paced() {
    flush_blocked();
    while (!paced_.empty() && paced_.top().at <= now() && blocked_.empty()) {
      Pending p = paced_.top();
      paced_.pop();
      if (p.data) data_pending_ = false;
      send_now(std::move(p.bytes));
    }
  }

  std::size_t stream_room() const {
    if (!snd_ || stream_input < 0 || input_eof_) return 0;
    const u128 window = snd_->cursor() + stream_window();
    return appended_ + kStreamChunk <= window ? kStreamChunk : 0;
  }

  u128 stream_window() const { return snd_->config().stream_window; }

  void read_stream_input(bool readable) {
    if (stream_room() == 0) return;
    if (!readable) {
      pollfd pfd{stream_input, POLLIN, 0};
      if (::poll(&pfd, 1, 0) <= 0) return;
    }
    std::vector<std::uint8_t> buf(kStreamChunk);
    const ssize_t n = ::read(stream_input, buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) return;
      error_ = std::string("read: ") + std::strerror(errno);
      return;
    }
    buf.resize(static_cast<std::size_t>(n));
    input_eof_ = n == 0;
    appended_ += buf.size();
    dispatch(Event{session::event::StreamData{std::move(buf), input_eof_, now()}});
  }

  void offer_transmit() {
    if (!snd_ || !peer_) return;
    for (std::size_t i = 0; i < kSendBurst && want_ready_ && !data_pending_ && blocked_.empty() &&
                            !done_;
         ++i) {
      produced_data_ = false;
      dispatch(Event{session::event::TransmitReady{now()}});
      if (!produced_data_) want_ready_ = false;
    }
  }

  void wait() {
    Time deadline = 1e300;
    for (const auto& t : timers_) {
      if (t) deadline = std::min(deadline, *t);
    }
    if (!paced_.empty() && blocked_.empty()) deadline = std::min(deadline, paced_.top().at);
    const bool can_transmit =
        snd_ && peer_ && want_ready_ && !data_pending_ && blocked_.empty();
    std::array<pollfd, 2> fds{};
    nfds_t nfds = 1;
    fds[0] = pollfd{sock_, static_cast<short>(POLLIN | (blocked_.empty() ? 0 : POLLOUT)), 0};
    if (stream_room() > 0) {
      fds[1] = pollfd{stream_input, POLLIN, 0};
      nfds = 2;
    }
    timespec ts{};
    timespec* tsp = &ts;
    if (!can_transmit) {
      const double wait = std::max(0.0, deadline - now());
      if (wait > 3600) {
        tsp = nullptr;
      } else {
        ts.tv_sec = static_cast<time_t>(wait);
        ts.tv_nsec = static_cast<long>((wait - static_cast<double>(ts.tv_sec)) * 1e9);
      }
    }
    const int rc = ::ppoll(fds.data(), nfds, tsp, nullptr);
    if (rc > 0 && nfds == 2 && (fds[1].revents & (POLLIN | POLLHUP))) read_stream_input(true);
  }

  int sock_;
  std::optional<Address> peer_;
  const wire::WireConfig& wire_;
  LoopOptions opts_;
  session::SenderSession* snd_;
  session::ReceiverSession* rcv_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<std::uint8_t> rx_;
  std::array<std::optional<Time>, 4> timers_{};
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> paced_;
  std::deque<std::vector<std::uint8_t>> blocked_;
  std::uint64_t seq_ = 0;
  bool want_ready_ = true;
  bool data_pending_ = false;
  bool produced_data_ = false;
  bool done_ = false;
  bool input_eof_ = false;
  u128 appended_ = 0;
  std::string error_;
  LoopResult result_;
};

}  // namespace

Expected<LoopResult, std::string> run_sender(int sock, std::optional<Address> peer,
                                             session::SenderSession& s, int stream_input,
                                             const wire::WireConfig& wire,
                                             const LoopOptions& opts) {
  Loop loop(sock, std::move(peer), wire, opts, &s, nullptr);
  loop.stream_input = stream_input;
  return loop.run();
}

Expected<LoopResult, std::string> run_receiver(int sock, std::optional<Address> peer,
                                               session::ReceiverSession& r, int sink_fd,
                                               const wire::WireConfig& wire,
                                               const LoopOptions& opts) {
  Loop loop(sock, std::move(peer), wire, opts, nullptr, &r);
  loop.sink_fd = sink_fd;
  return loop.run();
}

}  // namespace saratoga::udp
