#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tdprobe {

inline constexpr std::string_view kGenericHttpsLabel = "generic-https";
inline constexpr std::string_view kUnclassifiedLabel = "unclassified";

enum class ActionKind { pass, throttle, delayed_throttle, reset_every, stall };

std::string_view to_string(ActionKind k);

struct Action {
  ActionKind kind = ActionKind::pass;
  double rate_mbps = 0.0;             // throttle, delayed_throttle
  std::uint64_t burst_bytes = 4096;   // token bucket depth
  double onset_s = 0.0;               // delayed_throttle; stall delay
  std::uint64_t reset_segments = 0;   // reset_every: requests carried per connection
  std::uint64_t reset_bytes = 0;      // reset_every: downstream bytes per connection
  double stall_s = 0.0;               // stall

  void validate() const;
};

// match_sni: exact hostname (case-insensitive), "*.suffix" for subdomains,
// or "*" for any flow that carries an SNI.
struct Policy {
  std::string match_sni;
  Action action;
  std::string label;

  bool matches(std::string_view sni) const;
  void validate() const;
};

// Policy file: JSON array of
//   {"match_sni": "...", "label": "...",
//    "action": {"type": "pass" | "throttle" | "delayed_throttle" | "reset_every" | "stall", ...}}
// with action fields rate_mbps, burst_bytes, onset_s, segments, bytes, duration_s.
std::vector<Policy> parse_policies(std::string_view json_text);
std::vector<Policy> load_policies(const std::filesystem::path& path);

struct Classification {
  std::string label;
  std::optional<std::string> sni;
  std::optional<std::size_t> policy;  // index of the first matching policy

  bool operator==(const Classification&) const = default;
};

// First matching policy wins. No SNI or no match: generic-https. Bytes that
// are not a well-formed ClientHello: unclassified.
Classification classify(std::span<const std::byte> client_hello, std::span<const Policy> policies);

// Token bucket on the session clock. Rate in bytes per session second.
class TokenBucket {
 public:
  TokenBucket(double rate_bytes_per_s, double capacity, double now);

  double available(double now);
  void consume(double n, double now);
  // Session seconds until `n` tokens are available (0 if already).
  double wait_for(double n, double now);
  double capacity() const { return capacity_; }

 private:
  void refill(double now);
  double rate_;
  double capacity_;
  double tokens_;
  double last_;
};

}  // namespace tdprobe
