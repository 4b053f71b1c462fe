#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tdprobe/dash.hpp"
#include "tdprobe/model.hpp"
#include "tdprobe/net.hpp"
#include "tdprobe/sni_db.hpp"

namespace tdprobe {

// Wire protocol (inside TLS):
//   client -> server   "GET segment <k>\n"
//   server -> client   "OK <k> <n>\n" followed by n payload bytes, sent in
//                      paced bursts, or "ERR <reason>\n".
// One request is outstanding at a time; the next request acknowledges the
// previous segment.
std::string format_segment_request(std::uint64_t index);
std::optional<std::uint64_t> parse_segment_request(std::string_view line);

struct SegmentHeader {
  std::uint64_t index = 0;
  std::uint64_t length = 0;
};
// Throws ProtocolError on "ERR ..." or anything malformed.
SegmentHeader parse_segment_header(std::string_view line);

// Pseudorandom, incompressible segment content seeded by service name.
std::vector<std::byte> segment_payload(std::string_view service, std::uint64_t index,
                                       std::uint64_t size);

enum class UnknownSniPolicy { reject, serve_generic };

// Binds a handshake to a service. No SNI always maps to the generic profile;
// an unknown SNI follows the policy (nullopt = refuse the handshake).
std::optional<ServiceProfile> bind_service(std::optional<std::string_view> sni,
                                           const SniIndex& index, UnknownSniPolicy policy);

struct SegmentRequest {
  std::string service;
  std::uint64_t segment_index = 0;
};

// Checks a request against the bound profile; ProtocolError when out of range.
void validate_request(const SegmentRequest& req, const ServiceProfile& profile);

struct ServerConfig {
  Endpoint listen{"0.0.0.0", 443};
  std::filesystem::path cert;
  std::filesystem::path key;
  std::vector<ServiceProfile> services;
  DashParams dash;
  UnknownSniPolicy unknown_sni = UnknownSniPolicy::serve_generic;
  double time_scale = 1.0;
  double idle_timeout_s = 60.0;  // session seconds without a request
};

struct SegmentStat {
  std::uint64_t connection = 0;
  std::string service;
  std::uint64_t index = 0;
  std::uint64_t burst_size = 0;
  double start_s = 0.0;  // server session clock
  double throughput_mbps = 0.0;
};

class CommonServer {
 public:
  explicit CommonServer(ServerConfig config);
  ~CommonServer();
  CommonServer(const CommonServer&) = delete;
  CommonServer& operator=(const CommonServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const;

  std::vector<SegmentStat> segment_stats() const;
  std::size_t connections_served() const { return next_conn_id_.load(); }

 private:
  struct Connection {
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Socket sock, std::uint64_t conn_id);
  void record(SegmentStat stat);
  void reap(bool all);

  ServerConfig config_;
  SniIndex index_;
  ServiceProfile generic_;
  std::shared_ptr<void> sni_ctx_;  // servername callback argument
  std::optional<TlsContext> tls_;
  SessionClock clock_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::list<std::unique_ptr<Connection>> conns_;
  std::atomic<std::uint64_t> next_conn_id_{0};
  mutable std::mutex stats_mu_;
  std::vector<SegmentStat> stats_;
};

}  // namespace tdprobe
