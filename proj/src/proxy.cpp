#include "tdprobe/proxy.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cerrno>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tdprobe/model.hpp"
#include "tdprobe/tls_hello.hpp"

namespace tdprobe {

using steady = std::chrono::steady_clock;

std::string flow_record_json(const FlowRecord& r) {
  nlohmann::ordered_json j;
  j["flow"] = r.id;
  j["label"] = r.label;
  j["sni"] = r.sni ? nlohmann::ordered_json(*r.sni) : nlohmann::ordered_json(nullptr);
  j["policy"] = r.policy ? nlohmann::ordered_json(*r.policy) : nlohmann::ordered_json(nullptr);
  j["action"] = std::string(to_string(r.action));
  j["start_s"] = r.start_s;
  j["end_s"] = r.end_s;
  j["bytes_up"] = r.bytes_up;
  j["bytes_down"] = r.bytes_down;
  j["reset_injected"] = r.reset_injected;
  return j.dump();
}

namespace {

constexpr std::size_t kMaxHello = 64 * 1024;
constexpr std::size_t kChunk = 16 * 1024;

// Far-off deadline for relay I/O; the stop flag ends it instead.
steady::time_point forever() { return steady::now() + std::chrono::hours(24); }

enum class Recv { data, eof, stopped, error };

Recv recv_some(int fd, std::vector<std::byte>& buf, std::size_t max, std::size_t& n,
               const std::atomic<bool>& stop) {
  for (;;) {
    auto r = wait_fd(fd, false, forever(), &stop);
    if (r != Ready::ok) return stop ? Recv::stopped : Recv::error;
    ssize_t got = ::recv(fd, buf.data(), std::min(max, buf.size()), MSG_DONTWAIT);
    if (got > 0) {
      n = static_cast<std::size_t>(got);
      return Recv::data;
    }
    if (got == 0) return Recv::eof;
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
    return Recv::error;
  }
}

// Sleeps until session time `t`, waking early when `stop` is set.
bool sleep_session(const SessionClock& clock, double t, const std::atomic<bool>& stop) {
  const auto until = clock.wall_at(t);
  while (!stop) {
    auto now = steady::now();
    if (now >= until) return true;
    std::this_thread::sleep_for(std::min<steady::duration>(until - now, std::chrono::milliseconds(20)));
  }
  return false;
}

struct FlowState {
  int client = -1;
  int server = -1;
  std::atomic<bool> stop{false};
  std::atomic<bool> reset{false};
  std::atomic<std::uint64_t> up{0};
  std::atomic<std::uint64_t> down{0};

  // The sockets are closed abortively once both relays return; shutting the
  // read sides wakes the other relay right away.
  void inject_reset() {
    reset = true;
    stop = true;
    ::shutdown(client, SHUT_RD);
    ::shutdown(server, SHUT_RD);
  }
};

// client -> server. Tracks TLS records to count segment requests.
void relay_up(int client, int server, const Action& action, FlowState& st,
              std::span<const std::byte> hello) {
  RecordTracker tracker;
  std::uint64_t app_records = 0;
  const bool count_segments =
      action.kind == ActionKind::reset_every && action.reset_segments > 0;

  auto forward = [&](std::span<const std::byte> data) -> bool {
    std::size_t cut = data.size();
    if (count_segments) {
      for (const auto& s : tracker.scan(data)) {
        if (s.content_type != tls_content::application_data) continue;
        if (++app_records > action.reset_segments) {
          cut = s.offset;
          break;
        }
      }
    }
    if (!send_all(server, data.first(cut), forever(), &st.stop)) return false;
    st.up += cut;
    if (cut < data.size()) {
      st.inject_reset();
      return false;
    }
    return true;
  };

  if (!forward(hello)) return;
  std::vector<std::byte> buf(kChunk);
  while (!st.stop) {
    std::size_t n = 0;
    auto r = recv_some(client, buf, buf.size(), n, st.stop);
    if (r == Recv::eof) {
      if (!st.reset) ::shutdown(server, SHUT_WR);
      st.stop = true;
      return;
    }
    if (r != Recv::data) {
      st.stop = true;
      return;
    }
    if (!forward({buf.data(), n})) return;
  }
}

// server -> client, where shaping happens.
void relay_down(int server, int client, const Action& action, FlowState& st,
                const SessionClock& clock, double flow_start) {
  std::optional<TokenBucket> bucket;
  const double rate = action.rate_mbps * kBitsPerMegabit / 8.0;
  const bool throttles =
      action.kind == ActionKind::throttle || action.kind == ActionKind::delayed_throttle;
  const double onset = action.kind == ActionKind::delayed_throttle ? flow_start + action.onset_s
                                                                   : flow_start;
  if (action.kind == ActionKind::throttle)
    bucket.emplace(rate, static_cast<double>(action.burst_bytes), clock.now());

  RecordTracker tracker;
  bool stalled = false;  // stall already applied on this flow
  std::vector<std::byte> buf(kChunk);

  while (!st.stop) {
    std::size_t max = buf.size();
    if (throttles && !bucket && clock.now() >= onset)
      bucket.emplace(rate, static_cast<double>(action.burst_bytes), clock.now());
    if (bucket) max = std::min<std::size_t>(max, action.burst_bytes);
    if (action.kind == ActionKind::reset_every && action.reset_bytes > 0)
      max = std::min<std::size_t>(max, action.reset_bytes - st.down.load());

    std::size_t n = 0;
    auto r = recv_some(server, buf, max, n, st.stop);
    if (r == Recv::eof) {
      if (!st.reset) ::shutdown(client, SHUT_WR);
      return;
    }
    if (r != Recv::data) {
      st.stop = true;
      return;
    }
    std::span<const std::byte> data(buf.data(), n);

    if (action.kind == ActionKind::stall && !stalled) {
      for (const auto& s : tracker.scan(data)) {
        if (s.content_type != tls_content::application_data) continue;
        if (clock.now() < flow_start + action.onset_s) continue;
        if (!send_all(client, data.first(s.offset), forever(), &st.stop)) {
          st.stop = true;
          return;
        }
        st.down += s.offset;
        data = data.subspan(s.offset);
        stalled = true;
        if (!sleep_session(clock, clock.now() + action.stall_s, st.stop)) return;
        break;
      }
    }

    if (bucket) {
      const double need = static_cast<double>(data.size());
      const double wait = bucket->wait_for(need, clock.now());
      if (wait > 0.0 && !sleep_session(clock, clock.now() + wait, st.stop)) return;
      bucket->consume(need, clock.now());
    }
    if (!send_all(client, data, forever(), &st.stop)) {
      st.stop = true;
      return;
    }
    st.down += data.size();
    if (action.kind == ActionKind::reset_every && action.reset_bytes > 0 &&
        st.down >= action.reset_bytes) {
      st.inject_reset();
      return;
    }
  }
}

}  // namespace

NetemProxy::NetemProxy(ProxyConfig config)
    : config_(std::move(config)), clock_(config_.time_scale) {
  for (const auto& p : config_.policies) p.validate();
}

NetemProxy::~NetemProxy() { stop(); }

Endpoint NetemProxy::endpoint() const {
  Endpoint ep = config_.listen;
  if (ep.host == "0.0.0.0") ep.host = "127.0.0.1";
  ep.port = port_;
  return ep;
}

void NetemProxy::start() {
  ignore_sigpipe();
  if (config_.flow_log) {
    log_.open(*config_.flow_log, std::ios::app);
    if (!log_) throw IoError("cannot open flow log '" + config_.flow_log->string() + "'");
  }
  listener_ = tcp_listen(config_.listen);
  port_ = local_port(listener_);
  stop_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
  spdlog::info("netem proxy on {} -> {} ({} policies)", endpoint().str(), config_.upstream.str(),
               config_.policies.size());
}

void NetemProxy::stop() {
  if (!acceptor_.joinable()) return;
  stop_ = true;
  acceptor_.join();
  reap(true);
  listener_.close();
  if (log_.is_open()) log_.close();
}

void NetemProxy::reap(bool all) {
  for (auto it = active_.begin(); it != active_.end();) {
    if (all || (*it)->done) {
      if ((*it)->thread.joinable()) (*it)->thread.join();
      it = active_.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<FlowRecord> NetemProxy::flows() const {
  std::lock_guard lock(mu_);
  return finished_;
}

void NetemProxy::finish(const FlowRecord& r) {
  std::lock_guard lock(mu_);
  finished_.push_back(r);
  if (log_.is_open()) log_ << flow_record_json(r) << '\n' << std::flush;
}

void NetemProxy::accept_loop() {
  while (!stop_) {
    reap(false);
    if (wait_fd(listener_.fd(), false, steady::now() + std::chrono::milliseconds(200), &stop_) !=
        Ready::ok)
      continue;
    Socket sock = tcp_accept(listener_);
    if (!sock.valid()) continue;
    auto id = next_id_++;
    auto flow = std::make_unique<Flow>();
    auto* raw = flow.get();
    flow->thread = std::thread([this, raw, id, s = std::move(sock)]() mutable {
      try {
        handle(std::move(s), id);
      } catch (const std::exception& e) {
        spdlog::debug("flow {}: {}", id, e.what());
      }
      raw->done = true;
    });
    active_.push_back(std::move(flow));
  }
}

void NetemProxy::handle(Socket client, std::uint64_t id) {
  FlowRecord rec;
  rec.id = id;
  rec.start_s = clock_.now();

  // Collect the ClientHello (possibly spread over several reads).
  std::vector<std::byte> hello;
  std::vector<std::byte> buf(kChunk);
  const auto hello_deadline =
      steady::now() + std::chrono::milliseconds(static_cast<long long>(config_.hello_timeout_s * 1000));
  for (;;) {
    auto info = parse_client_hello(hello);
    if (!hello.empty() && info.status != HelloStatus::need_more) break;
    if (hello.size() >= kMaxHello) break;
    if (wait_fd(client.fd(), false, hello_deadline, &stop_) != Ready::ok) break;
    ssize_t n = ::recv(client.fd(), buf.data(), buf.size(), MSG_DONTWAIT);
    if (n > 0) {
      hello.insert(hello.end(), buf.begin(), buf.begin() + n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
    break;
  }
  if (stop_) return;

  auto cls = classify(hello, config_.policies);
  rec.label = cls.label;
  rec.sni = cls.sni;
  rec.policy = cls.policy;
  Action action;  // pass
  if (cls.policy) action = config_.policies[*cls.policy].action;
  rec.action = action.kind;
  spdlog::debug("flow {}: sni={} label={} action={}", id, cls.sni.value_or("-"), cls.label,
                to_string(action.kind));

  Socket server;
  try {
    server = tcp_connect(config_.upstream, std::chrono::milliseconds(5000));
  } catch (const Error& e) {
    spdlog::warn("flow {}: upstream unreachable: {}", id, e.what());
    client.reset();
    rec.end_s = clock_.now();
    finish(rec);
    return;
  }

  FlowState st;
  st.client = client.fd();
  st.server = server.fd();
  std::thread up([&] { relay_up(client.fd(), server.fd(), action, st, hello); });
  // Proxy shutdown also ends the flow.
  std::thread watch([&] {
    while (!st.stop && !stop_) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    st.stop = true;
  });
  relay_down(server.fd(), client.fd(), action, st, clock_, rec.start_s);
  // Downstream finished normally: let the upstream direction drain briefly.
  if (!st.stop) {
    auto grace = steady::now() + std::chrono::seconds(2);
    while (!st.stop && steady::now() < grace) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    st.stop = true;
  }
  up.join();
  if (st.reset) {
    client.reset();
    server.reset();
  }
  watch.join();

  rec.bytes_up = st.up;
  rec.bytes_down = st.down;
  rec.reset_injected = st.reset;
  rec.end_s = clock_.now();
  finish(rec);
}

}  // namespace tdprobe
