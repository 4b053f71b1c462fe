#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdprobe {

// Error hierarchy. The CLI maps each kind to a distinct exit status.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct SchemaError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConnectError : Error {
  using Error::Error;
};

struct ProtocolError : Error {
  using Error::Error;
};

// 1 MB = 10^6 bytes, 1 Mbps = 10^6 bit/s.
inline constexpr double kBitsPerMegabit = 1e6;

inline double mbps(double bytes, double seconds) {
  return bytes * 8.0 / seconds / kBitsPerMegabit;
}

// Bytes carried by `rate_mbps` over `seconds`.
inline double bytes_at(double rate_mbps, double seconds) {
  return rate_mbps * seconds * kBitsPerMegabit / 8.0;
}

enum class QosClass { video, audio };

std::string_view to_string(QosClass c);
QosClass qos_class_from_string(std::string_view s);

bool is_valid_hostname(std::string_view host);

struct ServiceProfile {
  std::string name;
  std::string sni;
  QosClass qos_class = QosClass::video;
  std::uint64_t content_size = 20'000'000;
  std::uint64_t segment_size = 2'000'000;

  std::uint64_t segment_count() const { return content_size / segment_size; }
  void validate() const;

  bool operator==(const ServiceProfile&) const = default;
};

// Profile bound to connections that carry no SNI (or an unknown one when the
// server is configured to serve those).
ServiceProfile generic_profile();

struct DetectionConfig {
  double delta_mbps = 1.75;
  double slot_fraction_a = 0.3;
  double slot_seconds = 1.75;
  int break_threshold_b = 5;
  std::uint64_t download_bytes = 20'000'000;
  double max_duration_s = 180.0;

  void validate() const;

  bool operator==(const DetectionConfig&) const = default;
};

struct ByteSample {
  double t = 0.0;  // session seconds
  std::uint64_t cum_bytes = 0;

  bool operator==(const ByteSample&) const = default;
};

struct ServiceRun {
  ServiceProfile service;
  std::vector<ByteSample> samples;
  int n_cb = 0;
  bool completed = false;

  // Completed runs stop receiving once the download finishes, so the last
  // sample marks the completion time.
  std::optional<double> completion_time() const;
  void validate(const DetectionConfig& config) const;

  bool operator==(const ServiceRun&) const = default;
};

struct SessionLog {
  std::string user_id;
  std::string isp;
  std::string started_at;  // ISO-8601 UTC
  std::vector<ServiceRun> runs;
  DetectionConfig config;

  void validate() const;
  const ServiceRun* find_run(std::string_view service) const;

  bool operator==(const SessionLog&) const = default;
};

struct SlotSeries {
  std::string service;
  double slot_seconds = 0.0;
  std::vector<double> throughput;  // Mbps per slot

  std::size_t slot_count() const { return throughput.size(); }
};

enum class TdDecision { yes, no, inconclusive_bad_network };

std::string_view to_string(TdDecision d);

struct Verdict {
  std::string service;
  bool tcd = false;
  bool csd = false;
  TdDecision td_detected = TdDecision::no;
  int n_l = 0;
  int n_s = 0;

  bool operator==(const Verdict&) const = default;
};

// "<ISO-8601 UTC timestamp>-<8 hex chars>"
std::string make_user_id(std::uint64_t random_suffix);
std::string iso8601_now();

}  // namespace tdprobe
