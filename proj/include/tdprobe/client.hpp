#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdprobe/model.hpp"
#include "tdprobe/net.hpp"

namespace tdprobe {

struct RunPlan {
  ServiceProfile test_service;
  std::vector<ServiceProfile> reference_services;
  Endpoint server;
  DetectionConfig config;

  // Test service first, then references.
  std::vector<ServiceProfile> services() const;
  void validate() const;
};

// Draws `n_refs` reference services uniformly (without replacement) from the
// profiles sharing the test service's QoS class.
RunPlan plan_run(std::string_view test, std::span<const ServiceProfile> profiles,
                 std::uint64_t rng_seed, int n_refs = 1);

// How a connection ended.
enum class Termination {
  content_done,  // clean close after the download finished
  deadline,      // session time limit reached; client closed
  peer_reset,    // TCP reset or TLS failure
  peer_close,    // orderly close before the content was complete
  idle_timeout,  // no payload for the idle window
  connect_failed,
};

bool is_break(Termination t);
int count_break(int n_cb, Termination t);

struct ClientOptions {
  double time_scale = 1.0;
  double idle_timeout_s = 10.0;
  double connect_timeout_s = 5.0;
  double reconnect_backoff_s = 1.0;
  std::string isp = "unknown";
  std::optional<std::string> user_id;
  std::uint64_t seed = 0;
  bool send_sni = true;
};

// Downloads all planned services simultaneously and returns the session log.
// Throws ConnectError (and writes nothing) when the server cannot be reached
// at start.
SessionLog run_measurement(const RunPlan& plan, const ClientOptions& options = {});

}  // namespace tdprobe
