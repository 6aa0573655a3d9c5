#include "saratoga/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>

#include "saratoga/comparison.hpp"
#include "saratoga/report_json.hpp"
#include "saratoga/udp.hpp"

namespace saratoga::cli {

namespace {

using nlohmann::json;

struct CommonOptions {
  unsigned port = kDefaultPort;
  std::string mode = "file";
  std::string pacer = "line";
  std::size_t payload = 1452;
  double status_interval_ms = 200;
  double max_idle_ms = 5000;
  double linger_ms = 1000;
  std::uint64_t stream_window = 1 << 20;
  std::size_t max_holes = 64;
  double max_duration = 0;
  double line_rate = 1e9;
  std::string trace;
};

struct RecvOptions {
  std::string out_path;
  std::string bind = "0.0.0.0";
  std::string peer;
  std::string get;
};

struct SendOptions {
  std::string file;
  std::string dest;
  bool listen = false;
  std::string bind = "0.0.0.0";
  bool corrupt_digest = false;
};

struct BenchOptions {
  double rate = 128000;
  double delay = 0.25;
  double loss = 0.01;
  std::size_t queue = 20;
  std::uint64_t seed = 1;
  std::uint64_t file_size = 1 << 20;
  double duration = 300;
  std::size_t mss = netsim::TcpRefParams{}.mss;
  double trace_interval = 0.5;
  std::string json_path;
  std::string csv_path;
};

std::string env_name(const std::string& flag) {
  std::string s = "SARATOGA_";
  for (char c : flag.substr(2)) s.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(c)));
  return s;
}

template <typename T>
CLI::Option* add(CLI::App* app, const std::string& flag, T& var, const std::string& help) {
  return app->add_option(flag, var, help)->envname(env_name(flag))->capture_default_str();
}

// Session tuning shared by every subcommand.
void add_session(CLI::App* app, CommonOptions& o) {
  add(app, "--payload", o.payload, "max Data payload bytes")->check(CLI::PositiveNumber);
  add(app, "--status-interval-ms", o.status_interval_ms, "Status solicitation interval")
      ->check(CLI::PositiveNumber);
  add(app, "--max-idle-ms", o.max_idle_ms, "abort after this long without hearing the peer")
      ->check(CLI::PositiveNumber);
  add(app, "--linger-ms", o.linger_ms, "receiver stays reachable after completion")
      ->check(CLI::NonNegativeNumber);
  add(app, "--stream-window", o.stream_window, "stream loss-tolerance window, bytes")
      ->check(CLI::PositiveNumber);
  add(app, "--max-holes", o.max_holes, "holes per Status packet")->check(CLI::PositiveNumber);
}

// Options for the two real-network subcommands.
void add_endpoint(CLI::App* app, CommonOptions& o) {
  add(app, "--port", o.port, "UDP port")->check(CLI::Range(1u, 65535u));
  add(app, "--max-duration", o.max_duration, "abort after this many seconds (0 = none)")
      ->check(CLI::NonNegativeNumber);
  add(app, "--trace", o.trace, "write a line-delimited JSON event/action log here");
  add_session(app, o);
}

void add_sender(CLI::App* app, CommonOptions& o) {
  add(app, "--mode", o.mode, "file | stream")->check(CLI::IsMember({"file", "stream"}));
  add(app, "--pacer", o.pacer, "line | fixed:<bits/s> | tfrc")
      ->check(CLI::Validator(
          [](std::string& s) {
            return rate::parse_pacer_spec(s) ? std::string() : "invalid pacer '" + s + "'";
          },
          "PACER"));
  add(app, "--line-rate", o.line_rate, "interface rate cap for tfrc, bits/s")
      ->check(CLI::PositiveNumber);
}

session::SessionConfig session_config(const CommonOptions& o) {
  session::SessionConfig c;
  c.wire.max_payload = o.payload;
  c.wire.max_holes_per_status = o.max_holes;
  c.status_interval = o.status_interval_ms / 1000.0;
  c.max_idle = o.max_idle_ms / 1000.0;
  c.linger = o.linger_ms / 1000.0;
  c.stream_window = o.stream_window;
  return c;
}

std::uint32_t random_session_id() {
  std::random_device rd;
  std::uint32_t id = 0;
  while (id == 0) id = rd();
  return id;
}

int usage_error(std::ostream& err, const std::string& msg) {
  err << "error: " << msg << '\n';
  return kExitUsage;
}

json loop_json(const udp::LoopResult& r, std::string_view role) {
  json j = report::to_json(r.report);
  j["role"] = role;
  j["ok"] = !r.failure.has_value();
  j["failure"] = r.failure ? json(std::string(session::to_string(*r.failure))) : json(nullptr);
  j["elapsed_s"] = r.elapsed;
  j["datagrams_sent"] = r.datagrams_sent;
  j["datagrams_received"] = r.datagrams_received;
  j["wire_bytes_sent"] = r.wire_bytes_sent;
  return j;
}

struct TraceFile {
  std::ofstream file;
  std::ostream* ptr() { return file.is_open() ? &file : nullptr; }
};

int cmd_recv(const CommonOptions& co, const RecvOptions& ro, std::ostream& out,
             std::ostream& err) {
  const session::SessionConfig cfg = session_config(co);
  if (!session::config_valid(cfg)) return usage_error(err, "invalid session configuration");
  if (ro.get.empty() != ro.peer.empty()) {
    return usage_error(err, "--get and --peer must be given together");
  }
  std::optional<udp::Address> peer;
  if (!ro.peer.empty()) {
    auto a = udp::resolve(ro.peer, static_cast<std::uint16_t>(co.port));
    if (!a) return usage_error(err, a.error());
    peer = *a;
  }
  const int family = peer ? peer->storage.ss_family : AF_INET;
  const std::string bind_addr = family == AF_INET6 && ro.bind == "0.0.0.0" ? "::" : ro.bind;
  // A requesting receiver uses an ephemeral port; a listening one binds --port.
  auto sock = udp::open_socket(bind_addr, peer ? 0 : static_cast<std::uint16_t>(co.port), family);
  if (!sock) return usage_error(err, sock.error());

  udp::Fd sink(::open(ro.out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (!sink) return usage_error(err, "open " + ro.out_path + ": " + std::strerror(errno));

  TraceFile trace;
  if (!co.trace.empty()) {
    trace.file.open(co.trace);
    if (!trace.file) return usage_error(err, "cannot open trace file " + co.trace);
  }

  session::ReceiverOptions opts;
  opts.cfg = cfg;
  if (peer) {
    opts.direction = wire::Direction::Get;
    opts.path = ro.get;
    opts.session_id = random_session_id();
  }
  session::ReceiverSession rcv(opts);
  udp::LoopOptions lo;
  lo.max_duration = co.max_duration;
  lo.trace_log = trace.ptr();
  auto res = udp::run_receiver(sock->get(), peer, rcv, sink.get(), cfg.wire, lo);
  if (!res) {
    err << "error: " << res.error() << '\n';
    return kExitTransferFailed;
  }
  if (auto size = rcv.transfer_size(); size && !res->failure) {
    if (::ftruncate(sink.get(), static_cast<off_t>(*size)) != 0) {
      err << "error: truncate " << ro.out_path << ": " << std::strerror(errno) << '\n';
      return kExitTransferFailed;
    }
  }
  json j = loop_json(*res, "receiver");
  j["path"] = rcv.path();
  j["output"] = ro.out_path;
  out << j.dump() << '\n';
  return res->failure || !res->report.digest_ok ? kExitTransferFailed : kExitOk;
}

int cmd_send(const CommonOptions& co, const SendOptions& so, std::ostream& out,
             std::ostream& err) {
  const session::SessionConfig cfg = session_config(co);
  if (!session::config_valid(cfg)) return usage_error(err, "invalid session configuration");
  const auto pacer = rate::parse_pacer_spec(co.pacer);
  if (!pacer) return usage_error(err, "invalid pacer '" + co.pacer + "'");
  if (so.listen == !so.dest.empty()) {
    return usage_error(err, "give exactly one of a destination or --listen");
  }
  const bool stream = co.mode == "stream";

  session::SenderOptions opts;
  opts.session_id = random_session_id();
  opts.mode = stream ? session::TransferMode::Stream : session::TransferMode::File;
  opts.direction = so.listen ? wire::Direction::Get : wire::Direction::Put;
  opts.cfg = cfg;
  opts.path = so.file == "-" ? "stdin" : so.file.substr(so.file.find_last_of('/') + 1);

  udp::Fd input;
  int stream_fd = -1;
  if (stream) {
    if (so.file == "-") {
      stream_fd = STDIN_FILENO;
    } else {
      input = udp::Fd(::open(so.file.c_str(), O_RDONLY | O_CLOEXEC));
      if (!input) return usage_error(err, "open " + so.file + ": " + std::strerror(errno));
      stream_fd = input.get();
    }
  } else {
    auto src = udp::FileSource::open(so.file);
    if (!src) return usage_error(err, src.error());
    opts.source = *src;
    opts.digest = session::digest_of(**src);
    if (so.corrupt_digest) opts.digest[0] ^= 0xFF;
  }

  std::optional<udp::Address> peer;
  if (!so.listen) {
    auto a = udp::resolve(so.dest, static_cast<std::uint16_t>(co.port));
    if (!a) return usage_error(err, a.error());
    peer = *a;
  }
  const int family = peer ? peer->storage.ss_family : AF_INET;
  const std::string bind_addr = family == AF_INET6 && so.bind == "0.0.0.0" ? "::" : so.bind;
  auto sock = udp::open_socket(bind_addr, so.listen ? static_cast<std::uint16_t>(co.port) : 0,
                               family);
  if (!sock) return usage_error(err, sock.error());

  TraceFile trace;
  if (!co.trace.empty()) {
    trace.file.open(co.trace);
    if (!trace.file) return usage_error(err, "cannot open trace file " + co.trace);
  }

  session::SenderSession snd(opts, rate::make_pacer(*pacer, cfg.wire.max_payload, co.line_rate));
  udp::LoopOptions lo;
  lo.max_duration = co.max_duration;
  lo.trace_log = trace.ptr();
  auto res = udp::run_sender(sock->get(), peer, snd, stream_fd, cfg.wire, lo);
  if (!res) {
    err << "error: " << res.error() << '\n';
    return kExitTransferFailed;
  }
  json j = loop_json(*res, "sender");
  j["path"] = opts.path;
  j["pacer"] = rate::to_string(*pacer);
  if (!stream) j["digest"] = digest_hex(opts.digest);
  j["wire_rate_bps"] = res->elapsed > 0 ? 8.0 * static_cast<double>(res->wire_bytes_sent) /
                                               res->elapsed
                                         : 0.0;
  out << j.dump() << '\n';
  return res->failure ? kExitTransferFailed : kExitOk;
}

int cmd_bench(const CommonOptions& co, const BenchOptions& bo, std::ostream& out,
              std::ostream& err) {
  netsim::SimLinkConfig link;
  link.rate_bps = bo.rate;
  link.one_way_delay = bo.delay;
  link.loss_prob = bo.loss;
  link.queue_len = bo.queue;
  link.seed = bo.seed;
  if (!netsim::config_valid(link)) return usage_error(err, "invalid link parameters");
  netsim::ComparisonParams params;
  params.session = session_config(co);
  params.tcp.mss = bo.mss;
  params.trace_interval = bo.trace_interval;
  if (!session::config_valid(params.session)) {
    return usage_error(err, "invalid session configuration");
  }
  auto rep = netsim::run_comparison(link, bo.file_size, bo.duration, params);
  if (!rep) {
    err << "error: simulated transfer failed: " << session::to_string(rep.error().reason)
        << '\n';
    return kExitTransferFailed;
  }
  if (!bo.csv_path.empty()) {
    std::ofstream csv(bo.csv_path);
    if (!csv) return usage_error(err, "cannot open " + bo.csv_path);
    netsim::write_trace_csv(csv, rep->traces);
  }
  const std::string text = report::to_json(*rep).dump(2) + "\n";
  if (bo.json_path.empty()) {
    out << text;
  } else {
    std::ofstream f(bo.json_path);
    if (!f) return usage_error(err, "cannot open " + bo.json_path);
    f << text;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reliable line-rate file and stream transfer over UDP"};
  app.name("saratoga");
  app.require_subcommand(1);
  app.set_version_flag("--version", "saratoga 1.0");

  CommonOptions co;
  RecvOptions ro;
  SendOptions so;
  BenchOptions bo;

  CLI::App* recv = app.add_subcommand("recv", "receive one transfer and write it to --out");
  add_endpoint(recv, co);
  add(recv, "--out", ro.out_path, "destination file")->required();
  add(recv, "--bind", ro.bind, "local address to bind");
  add(recv, "--peer", ro.peer, "sender host[:port] to request from (get)");
  add(recv, "--get", ro.get, "remote name to request (with --peer)");

  CLI::App* send = app.add_subcommand("send", "send a file or stream to a receiver");
  add_endpoint(send, co);
  add_sender(send, co);
  send->add_option("file", so.file, "input file ('-' = stdin in stream mode)")->required();
  send->add_option("dest", so.dest, "receiver host[:port]");
  send->add_flag("--listen", so.listen, "wait for a get request instead of pushing")
      ->envname("SARATOGA_LISTEN");
  add(send, "--bind", so.bind, "local address to bind");
  send->add_flag("--debug-corrupt-digest", so.corrupt_digest)
      ->envname("SARATOGA_DEBUG_CORRUPT_DIGEST")
      ->group("");

  CLI::App* bench = app.add_subcommand("bench", "simulated line-rate vs. TCP comparison");
  add_session(bench, co);
  add(bench, "--rate", bo.rate, "link rate, bits/s")->check(CLI::PositiveNumber);
  add(bench, "--delay", bo.delay, "one-way delay, seconds")->check(CLI::NonNegativeNumber);
  add(bench, "--loss", bo.loss, "i.i.d. packet loss probability")->check(CLI::Range(0.0, 1.0));
  add(bench, "--queue", bo.queue, "drop-tail queue length, packets")->check(CLI::PositiveNumber);
  add(bench, "--seed", bo.seed, "simulation seed");
  add(bench, "--file-size", bo.file_size, "bytes transferred by the line-rate flow");
  add(bench, "--duration", bo.duration, "reference flow run length, seconds")
      ->check(CLI::PositiveNumber);
  add(bench, "--mss", bo.mss, "reference flow segment payload, bytes")->check(CLI::PositiveNumber);
  add(bench, "--trace-interval", bo.trace_interval, "trace bin width, seconds")
      ->check(CLI::PositiveNumber);
  add(bench, "--json", bo.json_path, "write the report here instead of stdout");
  add(bench, "--csv", bo.csv_path, "write the rate trace CSV here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (recv->parsed()) return cmd_recv(co, ro, out, err);
  if (send->parsed()) return cmd_send(co, so, out, err);
  return cmd_bench(co, bo, out, err);
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace saratoga::cli
