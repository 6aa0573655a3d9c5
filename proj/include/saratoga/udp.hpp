#pragma once

// Real-datagram harness: drives one session over a UDP socket with a
// poll()-based clock and timer loop.

#include <netinet/in.h>
#include <sys/socket.h>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "saratoga/expected.hpp"
#include "saratoga/rate.hpp"
#include "saratoga/session.hpp"

namespace saratoga::udp {

/// Owning file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd();

  int get() const { return fd_; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  explicit operator bool() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

struct Address {
  sockaddr_storage storage{};
  socklen_t len = 0;
};

/// Resolves "host:port", "[v6]:port", or "host" with `default_port`.
Expected<Address, std::string> resolve(const std::string& text, std::uint16_t default_port);
std::string to_string(const Address& a);

/// Non-blocking UDP socket bound to `bind_addr`:`port` (port 0 picks one).
Expected<Fd, std::string> open_socket(const std::string& bind_addr, std::uint16_t port,
                                      int family = AF_INET);
std::uint16_t local_port(int fd);

/// pread-backed source over a regular file.
class FileSource final : public session::ByteSource {
 public:
  static Expected<std::shared_ptr<FileSource>, std::string> open(const std::string& path);
  u128 size() const override { return size_; }
  void read(u128 offset, std::span<std::uint8_t> out) const override;

 private:
  FileSource(Fd fd, u128 size) : fd_(std::move(fd)), size_(size) {}
  Fd fd_;
  u128 size_;
};

struct LoopOptions {
  /// Abort with MaxDuration after this many seconds; 0 disables.
  double max_duration = 0.0;
  std::ostream* trace_log = nullptr;
};

struct LoopResult {
  std::optional<session::FailureReason> failure;
  session::TransferReport report;
  std::uint64_t datagrams_sent = 0;
  std::uint64_t datagrams_received = 0;
  std::uint64_t wire_bytes_sent = 0;
  double elapsed = 0.0;
};

/// Runs a file or stream sender. For a Put, `peer` is the receiver; for a
/// Get, `peer` is learned from the first Request. `stream_input` is read
/// incrementally in stream mode (ignored for files).
Expected<LoopResult, std::string> run_sender(int sock, std::optional<Address> peer,
                                             session::SenderSession& s, int stream_input,
                                             const wire::WireConfig& wire,
                                             const LoopOptions& opts);

/// Runs a receiver, writing delivered bytes to `sink_fd` at their offsets.
Expected<LoopResult, std::string> run_receiver(int sock, std::optional<Address> peer,
                                               session::ReceiverSession& r, int sink_fd,
                                               const wire::WireConfig& wire,
                                               const LoopOptions& opts);

}  // namespace saratoga::udp
