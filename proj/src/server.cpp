#include "tdprobe/server.hpp"

#include <sys/socket.h>

#include <charconv>
#include <cstring>

#include <openssl/ssl.h>
#include <spdlog/spdlog.h>

namespace tdprobe {

using steady = std::chrono::steady_clock;

std::string format_segment_request(std::uint64_t index) {
  return "GET segment " + std::to_string(index) + "\n";
}

namespace {

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::span<const std::byte> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

}  // namespace

std::optional<std::uint64_t> parse_segment_request(std::string_view line) {
  constexpr std::string_view prefix = "GET segment ";
  if (line.substr(0, prefix.size()) != prefix) return std::nullopt;
  return parse_u64(line.substr(prefix.size()));
}

SegmentHeader parse_segment_header(std::string_view line) {
  if (line.substr(0, 4) == "ERR ") throw ProtocolError("server error: " + std::string(line.substr(4)));
  if (line.substr(0, 3) != "OK ") throw ProtocolError("malformed response '" + std::string(line) + "'");
  auto rest = line.substr(3);
  auto space = rest.find(' ');
  if (space == std::string_view::npos) throw ProtocolError("malformed response header");
  auto index = parse_u64(rest.substr(0, space));
  auto length = parse_u64(rest.substr(space + 1));
  if (!index || !length) throw ProtocolError("malformed response header");
  return SegmentHeader{*index, *length};
}

std::vector<std::byte> segment_payload(std::string_view service, std::uint64_t index,
                                       std::uint64_t size) {
  std::vector<std::byte> out(size);
  std::uint64_t state = fnv1a(service) ^ (index * 0xd1b54a32d192ed03ULL);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    auto v = splitmix64(state);
    std::memcpy(out.data() + i, &v, 8);
  }
  if (i < size) {
    auto v = splitmix64(state);
    std::memcpy(out.data() + i, &v, size - i);
  }
  return out;
}

std::optional<ServiceProfile> bind_service(std::optional<std::string_view> sni,
                                           const SniIndex& index, UnknownSniPolicy policy) {
  if (!sni || sni->empty()) return generic_profile();
  if (const auto* p = index.find_sni(*sni)) return *p;
  if (policy == UnknownSniPolicy::serve_generic) return generic_profile();
  return std::nullopt;
}

void validate_request(const SegmentRequest& req, const ServiceProfile& profile) {
  if (req.segment_index >= profile.segment_count())
    throw ProtocolError("segment " + std::to_string(req.segment_index) + " out of range for '" +
                        profile.name + "' (" + std::to_string(profile.segment_count()) +
                        " segments)");
}

namespace {

struct SniContext {
  const SniIndex* index;
  const ServiceProfile* generic;
  UnknownSniPolicy policy;
};

const ServiceProfile* resolve(const SniContext& ctx, const char* name) {
  std::optional<std::string_view> sni;
  if (name) sni = name;
  auto bound = bind_service(sni, *ctx.index, ctx.policy);
  if (!bound) return nullptr;
  if (const auto* p = ctx.index->find_name(bound->name); p && p->sni == bound->sni) return p;
  return ctx.generic;
}

int on_server_name(SSL* ssl, int* alert, void* arg) {
  const auto* ctx = static_cast<const SniContext*>(arg);
  const auto* profile = resolve(*ctx, SSL_get_servername(ssl, TLSEXT_NAMETYPE_host_name));
  if (!profile) {
    *alert = SSL_AD_UNRECOGNIZED_NAME;
    return SSL_TLSEXT_ERR_ALERT_FATAL;
  }
  SSL_set_app_data(ssl, const_cast<ServiceProfile*>(profile));
  return SSL_TLSEXT_ERR_OK;
}

}  // namespace

CommonServer::CommonServer(ServerConfig config)
    : config_(std::move(config)),
      index_(config_.services),
      generic_(generic_profile()),
      clock_(config_.time_scale) {
  config_.dash.validate();
  for (const auto& s : config_.services) s.validate();
}

CommonServer::~CommonServer() { stop(); }

Endpoint CommonServer::endpoint() const {
  Endpoint ep = config_.listen;
  if (ep.host == "0.0.0.0") ep.host = "127.0.0.1";
  ep.port = port_;
  return ep;
}

void CommonServer::start() {
  ignore_sigpipe();
  tls_ = TlsContext::server(config_.cert, config_.key);
  auto ctx = std::make_shared<SniContext>(SniContext{&index_, &generic_, config_.unknown_sni});
  sni_ctx_ = ctx;
  SSL_CTX_set_tlsext_servername_callback(tls_->get(), on_server_name);
  SSL_CTX_set_tlsext_servername_arg(tls_->get(), ctx.get());
  listener_ = tcp_listen(config_.listen);
  port_ = local_port(listener_);
  stop_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
  spdlog::info("replay server listening on {} ({} services)", endpoint().str(),
               config_.services.size());
}

void CommonServer::stop() {
  if (!acceptor_.joinable()) return;
  stop_ = true;
  acceptor_.join();
  reap(true);
  listener_.close();
}

void CommonServer::reap(bool all) {
  for (auto it = conns_.begin(); it != conns_.end();) {
    if (all || (*it)->done) {
      if ((*it)->thread.joinable()) (*it)->thread.join();
      it = conns_.erase(it);
    } else {
      ++it;
    }
  }
}

void CommonServer::accept_loop() {
  while (!stop_) {
    reap(false);
    if (wait_fd(listener_.fd(), false, steady::now() + std::chrono::milliseconds(200), &stop_) !=
        Ready::ok)
      continue;
    Socket sock = tcp_accept(listener_);
    if (!sock.valid()) continue;
    auto id = next_conn_id_++;
    auto conn = std::make_unique<Connection>();
    auto* raw = conn.get();
    conn->thread = std::thread([this, raw, id, s = std::move(sock)]() mutable {
      try {
        serve(std::move(s), id);
      } catch (const std::exception& e) {
        spdlog::debug("connection {}: {}", id, e.what());
      }
      raw->done = true;
    });
    conns_.push_back(std::move(conn));
  }
}

void CommonServer::record(SegmentStat stat) {
  std::lock_guard lock(stats_mu_);
  stats_.push_back(std::move(stat));
}

std::vector<SegmentStat> CommonServer::segment_stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

void CommonServer::serve(Socket sock, std::uint64_t conn_id) {
  TlsStream tls(*tls_, std::move(sock));
  if (tls.accept(steady::now() + std::chrono::seconds(10), &stop_) != IoStatus::ok) {
    spdlog::debug("connection {}: handshake failed", conn_id);
    return;
  }
  const auto* profile = static_cast<const ServiceProfile*>(SSL_get_app_data(tls.ssl()));
  if (!profile) {
    SniContext ctx{&index_, &generic_, config_.unknown_sni};
    auto name = tls.server_name();
    profile = resolve(ctx, name ? name->c_str() : nullptr);
    if (!profile) return;
  }

  DashState dash = initial_dash_state(config_.dash, profile->segment_size);
  const auto idle = clock_.to_wall(config_.idle_timeout_s);

  struct InFlight {
    std::uint64_t index;
    std::uint64_t bytes;
    std::uint64_t burst;
    double start;
  };
  std::optional<InFlight> last;

  auto finish_segment = [&](double now, bool adapt) {
    if (!last) return;
    const double elapsed = now - last->start;
    const double th = elapsed > 0.0 ? mbps(static_cast<double>(last->bytes), elapsed) : 0.0;
    record(SegmentStat{conn_id, profile->name, last->index, last->burst, last->start, th});
    if (adapt) on_segment_measured(dash, th, config_.dash.min_burst, profile->segment_size);
    last.reset();
  };

  std::string line;
  for (;;) {
    auto st = tls.read_line(line, 256, steady::now() + idle, &stop_);
    if (st != IoStatus::ok) {
      // A clean close right after a segment still yields its throughput.
      if (st == IoStatus::closed) finish_segment(clock_.now(), false);
      return;
    }
    finish_segment(clock_.now(), true);

    auto index = parse_segment_request(line);
    if (!index) {
      if (tls.write_all(as_bytes("ERR bad request\n"), steady::now() + idle, &stop_) != IoStatus::ok)
        return;
      continue;
    }
    try {
      validate_request(SegmentRequest{profile->name, *index}, *profile);
    } catch (const ProtocolError& e) {
      std::string msg = std::string("ERR ") + e.what() + "\n";
      if (tls.write_all(as_bytes(msg), steady::now() + idle, &stop_) != IoStatus::ok) return;
      continue;
    }

    const auto payload = segment_payload(profile->name, *index, profile->segment_size);
    const std::string header =
        "OK " + std::to_string(*index) + " " + std::to_string(payload.size()) + "\n";
    const double start = clock_.now();
    last = InFlight{*index, payload.size(), dash.burst_size, start};
    if (tls.write_all(as_bytes(header), steady::now() + idle, &stop_) != IoStatus::ok) return;

    std::size_t offset = 0;
    std::size_t tick = 0;
    for (auto burst : plan_bursts(payload.size(), dash.burst_size)) {
      clock_.sleep_until(start + static_cast<double>(tick++) * dash.tx_window);
      if (stop_) return;
      std::span<const std::byte> chunk(payload.data() + offset, burst);
      if (tls.write_all(chunk, steady::now() + idle, &stop_) != IoStatus::ok) return;
      offset += burst;
    }
  }
}

}  // namespace tdprobe
