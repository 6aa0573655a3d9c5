// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "packet_gen.hpp"
#include "saratoga/comparison.hpp"
#include "saratoga/digest.hpp"
#include "saratoga/holes.hpp"
#include "saratoga/rate.hpp"
#include "saratoga/session.hpp"
#include "saratoga/sim.hpp"
#include "saratoga/wire.hpp"

extern char** environ;

using namespace saratoga;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 ---------------------------------------------------------------------

Outcome reliability_sweep() {
  const double losses[] = {0, 0.01, 0.05, 0.1, 0.3};
  const std::uint64_t max_size = 5ull << 20;
  std::mt19937_64 rng(2024);
  const auto t0 = Clock::now();
  int ok = 0;
  std::string first_failure;
  for (int i = 0; i < 200; ++i) {
    std::uint64_t size = 0;
    if (i == 1) {
      size = max_size;
    } else if (i > 1) {
      // Log-uniform over [1, 5 MiB].
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      size = static_cast<std::uint64_t>(std::exp(u * std::log(static_cast<double>(max_size))));
    }
    sim::TransferConfig cfg;
    cfg.link.rate_bps = 50e6;
    cfg.link.one_way_delay = 0.01;
    cfg.link.queue_len = 200;
    cfg.link.loss_prob = losses[i % 5];
    cfg.link.seed = 1000 + static_cast<std::uint64_t>(i);
    cfg.session_id = static_cast<std::uint32_t>(i + 1);
    auto src = std::make_shared<session::PatternSource>(size, static_cast<std::uint64_t>(i));
    auto r = sim::run_transfer(cfg, src);
    const bool good = r && r->receiver.digest_ok && r->sink_matches &&
                      r->receiver.unique_bytes == size;
    if (good) {
      ++ok;
    } else if (first_failure.empty()) {
      first_failure = " first failure: #" + std::to_string(i) + " size " + std::to_string(size) +
                      " loss " + fmt("%g", cfg.link.loss_prob) +
                      (r ? "" : std::string(" ") +
                                    std::string(session::to_string(r.error().reason)));
    }
  }
  const double elapsed = seconds_since(t0);
  return {ok == 200 && elapsed < 60.0,
          std::to_string(ok) + "/200 digest_ok, runtime " + fmt("%.1f", elapsed) + " s" +
              first_failure};
}

// 2 ---------------------------------------------------------------------

Outcome line_rate_vs_tcp() {
  netsim::SimLinkConfig link;
  link.rate_bps = 128000;
  link.one_way_delay = 0.25;
  link.loss_prob = 0.01;
  link.seed = 1;
  auto lossy = netsim::run_comparison(link, 1 << 20, 600, netsim::ComparisonParams{});
  if (!lossy) return {false, "saratoga transfer failed"};

  netsim::SimLinkConfig clean = link;
  clean.loss_prob = 0;
  const auto sawtooth = netsim::run_tcp_reference(clean, 600);
  const auto peaks = netsim::count_sawtooth_peaks(sawtooth.state.trace, clean.rate_bps);
  const double per_minute = static_cast<double>(peaks) * 60.0 / 600.0;

  const bool pass =
      lossy->saratoga_utilization >= 0.90 && lossy->tcp_utilization <= 0.60 && per_minute >= 3.0;
  return {pass, "saratoga " + fmt("%.3f", lossy->saratoga_utilization) + ", tcp " +
                    fmt("%.3f", lossy->tcp_utilization) + " (mss " +
                    std::to_string(netsim::TcpRefParams{}.mss) + "), sawtooth " +
                    fmt("%.2f", per_minute) + " peaks/min"};
}

// 3 ---------------------------------------------------------------------

// Smallest of 16/32/64/128 bits that holds v, worked out without the codec.
unsigned minimal_bits(u128 v) {
  for (unsigned b : {16u, 32u, 64u}) {
    if ((v >> b) == 0) return b;
  }
  return 128;
}

Outcome descriptor_scaling() {
  const u128 bounds[] = {pow2(16), pow2(32), pow2(64), kU128Max};
  const wire::WireConfig cfg;
  int checked = 0;
  std::string why;
  auto fail = [&](const std::string& s) {
    if (why.empty()) why = s;
  };
  for (const u128 b : bounds) {
    for (int delta = -1; delta <= 1; ++delta) {
      if (b == kU128Max && delta == 1) continue;
      const u128 v = delta < 0 ? b - 1 : b + static_cast<u128>(delta);
      const std::string tag = to_string(v);
      ++checked;

      // Width minimality.
      const wire::DescriptorWidth w = wire::select_descriptor_width(v);
      if (wire::width_bits(w) != minimal_bits(v)) fail("width at " + tag);
      if (v > wire::width_max(w)) fail("width too small at " + tag);

      // Sparse source: the final bytes of a transfer of size v.
      session::PatternSource src(v, 17);
      const std::size_t tail = static_cast<std::size_t>(std::min<u128>(v, 100));
      const u128 off = v - tail;
      std::vector<std::uint8_t> payload(tail);
      src.read(off, payload);
      wire::PacketHeader h;
      h.session_id = 0xABCD;
      h.width = w;
      h.end_of_data = true;
      const wire::Packet data{h, wire::Data{off, payload}};
      auto bytes = wire::encode_packet(data, cfg);
      if (!bytes) {
        fail("encode data at " + tag);
        continue;
      }
      const std::size_t wb = wire::width_bytes(w);
      if (bytes->size() != wire::kHeaderBytes + wb + tail) fail("data size at " + tag);
      u128 field = 0;
      for (std::size_t i = 0; i < wb; ++i) field = (field << 8) | (*bytes)[wire::kHeaderBytes + i];
      if (field != off) fail("offset bytes at " + tag);
      auto back = wire::decode_packet(*bytes, cfg);
      if (!back || !(*back == data)) fail("data roundtrip at " + tag);

      // Status with holes at the top of the space.
      if (v >= 100) {
        const wire::Packet st{h, wire::Status{0, {{v - 90, v - 50}, {v - 20, v - 10}}}};
        auto sb = wire::encode_packet(st, cfg);
        auto sd = sb ? wire::decode_packet(*sb, cfg) : Expected<wire::Packet, wire::WireError>(
                                                           unexpected(wire::WireError::Truncated));
        if (!sd || !(*sd == st)) fail("status roundtrip at " + tag);
      }

      // Hole arithmetic near v.
      holes::HoleTracker t(v);
      t.mark_received(v - 50, 30);
      t.mark_received(v - 10, 10);
      const std::vector<ByteRange> expect{{0, v - 50}, {v - 20, v - 10}};
      if (t.hole_list(64) != expect) fail("holes at " + tag);
      if (t.received_bytes() != 40) fail("received count at " + tag);
      t.mark_received(v - 20, 10);
      if (t.hole_list(64) != std::vector<ByteRange>{{0, v - 50}}) fail("merge at " + tag);
      // Past the end: RangeBeyondEnd, or Overflow where v + 1 wraps.
      if (t.mark_received(v - 5, 6) == holes::MarkResult::Ok) fail("bound at " + tag);

      // Receiver session fed the last packet.
      session::ReceiverOptions ro;
      session::ReceiverSession rcv(ro);
      rcv.start(0);
      wire::Metadata md;
      md.transfer_size = v;
      wire::Packet mp{h, md};
      mp.header.end_of_data = false;
      rcv.on_event(session::event::PacketArrived{mp, 0.1});
      wire::Packet dp = data;
      dp.header.status_requested = true;
      const auto acts = rcv.on_event(session::event::PacketArrived{dp, 0.2});
      bool wrote = false;
      bool reported = false;
      for (const auto& a : acts) {
        if (auto* ws = std::get_if<session::action::WriteSink>(&a)) {
          wrote = ws->offset == off && ws->bytes == payload;
        }
        if (auto* sp = std::get_if<session::action::SendPacket>(&a)) {
          if (auto* s = std::get_if<wire::Status>(&sp->packet.body)) {
            reported = sp->packet.header.width == w &&
                       (tail == v ? s->holes.empty()
                                  : s->holes == std::vector<ByteRange>{{0, off}});
          }
        }
      }
      if (!wrote) fail("receiver write at " + tag);
      if (!reported) fail("receiver status at " + tag);
    }
  }
  return {why.empty(), std::to_string(checked) + " boundary points" +
                           (why.empty() ? "" : ", failed: " + why)};
}

// 4 ---------------------------------------------------------------------

Outcome hole_oracle() {
  std::mt19937_64 rng(4444);
  int mismatches = 0;
  std::vector<std::uint8_t> bits;
  auto runs = [&](std::uint8_t value, std::size_t limit) {
    std::vector<ByteRange> out;
    std::size_t i = 0;
    while (i < limit) {
      const auto it = std::find(bits.begin() + static_cast<long>(i), bits.begin() + static_cast<long>(limit), value);
      i = static_cast<std::size_t>(it - bits.begin());
      if (i >= limit) break;
      const auto end = std::find(it, bits.begin() + static_cast<long>(limit),
                                 static_cast<std::uint8_t>(!value));
      const auto j = static_cast<std::size_t>(end - bits.begin());
      out.push_back({i, j});
      i = j;
    }
    return out;
  };
  for (int seq = 0; seq < 10000; ++seq) {
    const std::size_t space = rng() % (64 * 1024 + 1);
    const bool bounded = seq % 4 != 0;
    bits.assign(space, 0);
    std::size_t high = 0;
    holes::HoleTracker t = bounded ? holes::HoleTracker(space) : holes::HoleTracker();
    const int ops = static_cast<int>(rng() % 64);
    bool ok = true;
    for (int i = 0; i < ops && space > 0; ++i) {
      const std::size_t off = rng() % space;
      std::size_t len = 1 + rng() % std::max<std::size_t>(1, space / (1 + rng() % 64));
      if (rng() % 16 == 0) len = 0;
      if (!bounded) len = std::min(len, space - off);
      const auto got = t.mark_received(off, len);
      holes::MarkResult want = holes::MarkResult::Ok;
      if (len == 0) {
        want = holes::MarkResult::EmptyRange;
      } else if (off + len > space) {
        want = holes::MarkResult::RangeBeyondEnd;
      } else {
        std::fill(bits.begin() + static_cast<long>(off), bits.begin() + static_cast<long>(off + len), 1);
        high = std::max(high, off + len);
      }
      ok &= got == want;
    }
    const bool complete =
        bounded && std::find(bits.begin(), bits.end(), 0) == bits.end();
    ok &= t.received_ranges() == runs(1, space);
    ok &= t.hole_list(SIZE_MAX) == runs(0, bounded ? space : high);
    ok &= t.is_complete() == complete;
    if (!ok) ++mismatches;
  }
  return {mismatches == 0, "10000 sequences, " + std::to_string(mismatches) + " mismatches"};
}

// 5 ---------------------------------------------------------------------

Outcome tfrc_numerics() {
  double worst = 0;
  bool monotone = true;
  const int np = 400;
  const int nr = 100;
  for (int j = 0; j < nr; ++j) {
    const double r = 0.01 * std::pow(2.0 / 0.01, static_cast<double>(j) / (nr - 1));
    double prev = INFINITY;
    for (int i = 0; i < np; ++i) {
      const double p = 1e-4 * std::pow(0.5 / 1e-4, static_cast<double>(i) / (np - 1));
      rate::TfrcState st = rate::tfrc_initial(1460, 1e300, r);
      st.rtt = r;
      st.rto = 4 * r;
      st.loss_event_rate = p;
      const double x = rate::tfrc_throughput(st);
      const long double lp = p;
      const long double lr = r;
      const long double ref =
          1460.0L / (lr * std::sqrt(2.0L * lp / 3.0L) +
                     12.0L * lr * std::sqrt(3.0L * lp / 8.0L) * lp * (1.0L + 32.0L * lp * lp));
      worst = std::max(worst, static_cast<double>(std::fabs((x - ref) / ref)));
      monotone &= x < prev;
      prev = x;
    }
  }

  // Token bucket window audit.
  std::mt19937_64 rng(55);
  bool within = true;
  for (double rate_bps : {128000.0, 1e6, 1e8}) {
    const double burst = 8 * 1452.0;
    rate::Pacer p = rate::Pacer::fixed(rate_bps, burst);
    std::vector<std::pair<double, double>> log;
    double now = 0;
    for (int i = 0; i < 5000; ++i) {
      if (rng() % 40 == 0) now += static_cast<double>(rng() % 500) * 1e-3;
      const auto bytes = static_cast<std::size_t>(28 + rng() % 1473);
      now = p.earliest_send(bytes, now);
      log.emplace_back(now, static_cast<double>(bytes));
    }
    for (std::size_t i = 0; i < log.size(); ++i) {
      double sum = 0;
      for (std::size_t j = i; j < log.size() && j < i + 300; ++j) {
        sum += log[j].second;
        within &= sum <= rate_bps * (log[j].first - log[i].first) / 8 + burst + 1e-6;
      }
    }
  }
  return {worst <= 1e-9 && monotone && within,
          "max rel err " + fmt("%.2e", worst) + ", monotone " + (monotone ? "yes" : "no") +
              ", bucket audit " + (within ? "ok" : "exceeded")};
}

// 6 ---------------------------------------------------------------------

Outcome streaming() {
  sim::TransferConfig cfg;
  cfg.link.loss_prob = 0.02;
  cfg.link.seed = 6;
  cfg.session.stream_window = 1 << 20;
  auto lossy = sim::run_stream(cfg, sim::StreamFeed{}, 60.0);
  cfg.link.loss_prob = 0;
  auto clean = sim::run_stream(cfg, sim::StreamFeed{}, 60.0);
  if (!lossy || !clean) return {false, "stream run failed"};
  const bool lossy_ok = lossy->mismatched_bytes == 0 && lossy->in_order &&
                        lossy->skipped_bytes == lossy->receiver.gap_bytes &&
                        lossy->delivered_bytes + lossy->skipped_bytes == lossy->source_bytes;
  const bool clean_ok = clean->receiver.gap_bytes == 0 && clean->mismatched_bytes == 0 &&
                        clean->delivered_bytes == clean->source_bytes;
  return {lossy_ok && clean_ok,
          "2% loss: " + to_string(lossy->delivered_bytes) + "/" + to_string(lossy->source_bytes) +
              " delivered, gap " + to_string(lossy->receiver.gap_bytes) + ", mismatched " +
              std::to_string(lossy->mismatched_bytes) + "; lossless gap " +
              to_string(clean->receiver.gap_bytes)};
}

// 7 ---------------------------------------------------------------------

Outcome wire_fuzz() {
  const wire::WireConfig cfg;
  std::mt19937_64 rng(777);
  int roundtrip_fail = 0;
  for (int i = 0; i < 10000; ++i) {
    const wire::Packet p = testgen::random_packet(rng, cfg);
    auto b = wire::encode_packet(p, cfg);
    if (!b) {
      ++roundtrip_fail;
      continue;
    }
    auto d = wire::decode_packet(*b, cfg);
    if (!d || !(*d == p)) {
      ++roundtrip_fail;
      continue;
    }
    auto again = wire::encode_packet(*d, cfg);
    if (!again || *again != *b) ++roundtrip_fail;
  }

  int invalid_accepted = 0;
  int accepted = 0;
  for (int i = 0; i < 100000; ++i) {
    std::vector<std::uint8_t> buf;
    if (i % 2 == 0) {
      buf.resize(rng() % 128);
      for (auto& x : buf) x = static_cast<std::uint8_t>(rng());
      if (buf.size() >= 8 && i % 4 == 0) {
        buf[0] = static_cast<std::uint8_t>(0x10 | (1 + rng() % 4));
        buf[6] = static_cast<std::uint8_t>((buf.size() - 8) >> 8);
        buf[7] = static_cast<std::uint8_t>(buf.size() - 8);
      }
    } else {
      buf = *wire::encode_packet(testgen::random_packet(rng, cfg), cfg);
      for (int m = 1 + static_cast<int>(rng() % 3); m > 0 && !buf.empty(); --m) {
        switch (rng() % 3) {
          case 0: buf[rng() % buf.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
          case 1: buf.resize(rng() % (buf.size() + 1)); break;
          default: buf.push_back(static_cast<std::uint8_t>(rng())); break;
        }
      }
    }
    const std::vector<std::uint8_t> exact(buf.begin(), buf.end());
    auto p = wire::decode_packet(exact, cfg);
    if (!p) continue;
    ++accepted;
    if (!wire::validate(*p, cfg)) ++invalid_accepted;
  }
  return {roundtrip_fail == 0 && invalid_accepted == 0,
          "10000 roundtrips, " + std::to_string(roundtrip_fail) + " failed; 100000 fuzz inputs, " +
              std::to_string(accepted) + " accepted, " + std::to_string(invalid_accepted) +
              " invalid"};
}

// 8 ---------------------------------------------------------------------

pid_t spawn(const std::vector<std::string>& args, const fs::path& stdout_path) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, stdout_path.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  pid_t pid = -1;
  if (posix_spawn(&pid, argv[0], &fa, nullptr, argv.data(), environ) != 0) pid = -1;
  posix_spawn_file_actions_destroy(&fa);
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  if (pid <= 0 || ::waitpid(pid, &status, 0) < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome loopback() {
  const fs::path dir = fs::temp_directory_path() / ("saratoga-accept-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path in = dir / "in.bin";
  const fs::path out = dir / "out.bin";
  std::vector<std::uint8_t> bytes(10u << 20);
  std::mt19937_64 rng(8);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
  {
    std::ofstream f(in, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const std::string port = std::to_string(30000 + ::getpid() % 20000);
  const auto t0 = Clock::now();
  const pid_t rp = spawn({SARATOGA_BIN, "recv", "--out", out.string(), "--port", port, "--bind",
                          "127.0.0.1"},
                         dir / "recv.json");
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const pid_t sp = spawn({SARATOGA_BIN, "send", in.string(), "127.0.0.1:" + port}, dir / "send.json");
  const int sc = wait_exit(sp);
  const int rc = wait_exit(rp);
  const double elapsed = seconds_since(t0);

  bool digest_ok = false;
  try {
    std::ifstream rj(dir / "recv.json");
    digest_ok = nlohmann::json::parse(rj).at("digest_ok").get<bool>();
  } catch (const std::exception&) {
  }
  std::ifstream f(out, std::ios::binary);
  const std::vector<std::uint8_t> got{std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>()};
  const bool same = got == bytes;
  std::error_code ec;
  fs::remove_all(dir, ec);
  return {sc == 0 && rc == 0 && digest_ok && same && elapsed < 10.0,
          "10 MiB, exit " + std::to_string(sc) + "/" + std::to_string(rc) + ", digest_ok " +
              (digest_ok ? "true" : "false") + ", identical " + (same ? "yes" : "no") + ", " +
              fmt("%.2f", elapsed) + " s"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"reliability sweep", reliability_sweep},
      {"line-rate vs tcp", line_rate_vs_tcp},
      {"descriptor scaling", descriptor_scaling},
      {"hole tracker oracle", hole_oracle},
      {"tfrc numerics", tfrc_numerics},
      {"streaming", streaming},
      {"wire fuzz", wire_fuzz},
      {"real loopback", loopback},
  };
  int failed = 0;
  int n = 0;
  for (const auto& c : criteria) {
    ++n;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << c.name << ": " << o.detail
              << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
