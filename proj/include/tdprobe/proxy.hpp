#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tdprobe/net.hpp"
#include "tdprobe/policy.hpp"

namespace tdprobe {

struct ProxyConfig {
  Endpoint listen{"127.0.0.1", 0};
  Endpoint upstream;
  std::vector<Policy> policies;
  double time_scale = 1.0;
  std::optional<std::filesystem::path> flow_log;  // JSONL, one record per finished flow
  double hello_timeout_s = 5.0;                   // wall seconds to wait for a ClientHello
};

struct FlowRecord {
  std::uint64_t id = 0;
  std::string label;
  std::optional<std::string> sni;
  std::optional<std::size_t> policy;
  ActionKind action = ActionKind::pass;
  double start_s = 0.0;  // proxy session clock
  double end_s = 0.0;
  std::uint64_t bytes_up = 0;    // client -> server, including the hello
  std::uint64_t bytes_down = 0;  // server -> client
  bool reset_injected = false;
};

std::string flow_record_json(const FlowRecord& r);

// Explicit TCP relay: clients connect here, flows are classified from the
// ClientHello and forwarded to `upstream` with the first matching policy's
// action applied.
class NetemProxy {
 public:
  explicit NetemProxy(ProxyConfig config);
  ~NetemProxy();
  NetemProxy(const NetemProxy&) = delete;
  NetemProxy& operator=(const NetemProxy&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const;

  // Finished flows, in completion order.
  std::vector<FlowRecord> flows() const;

 private:
  struct Flow {
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void handle(Socket client, std::uint64_t id);
  void finish(const FlowRecord& r);
  void reap(bool all);

  ProxyConfig config_;
  SessionClock clock_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::list<std::unique_ptr<Flow>> active_;
  std::atomic<std::uint64_t> next_id_{0};
  mutable std::mutex mu_;
  std::vector<FlowRecord> finished_;
  std::ofstream log_;
};

}  // namespace tdprobe
