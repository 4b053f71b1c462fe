#include "tdprobe/model.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>

namespace tdprobe {

std::string_view to_string(QosClass c) {
  return c == QosClass::video ? "video" : "audio";
}

QosClass qos_class_from_string(std::string_view s) {
  if (s == "video") return QosClass::video;
  if (s == "audio") return QosClass::audio;
  throw InvariantError("unknown qos class '" + std::string(s) + "'");
}

std::string_view to_string(TdDecision d) {
  switch (d) {
    case TdDecision::yes:
      return "yes";
    case TdDecision::no:
      return "no";
    case TdDecision::inconclusive_bad_network:
      return "inconclusive_bad_network";
  }
  return "?";
}

bool is_valid_hostname(std::string_view host) {
  if (host.empty() || host.size() > 253) return false;
  if (host.back() == '.') host.remove_suffix(1);
  std::size_t start = 0;
  while (start <= host.size()) {
    auto dot = host.find('.', start);
    if (dot == std::string_view::npos) dot = host.size();
    auto label = host.substr(start, dot - start);
    if (label.empty() || label.size() > 63) return false;
    if (label.front() == '-' || label.back() == '-') return false;
    for (char c : label) {
      bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                (c >= '0' && c <= '9') || c == '-';
      if (!ok) return false;
    }
    start = dot + 1;
  }
  return true;
}

void ServiceProfile::validate() const {
  if (name.empty()) throw InvariantError("service name is empty");
  if (!is_valid_hostname(sni))
    throw InvariantError("service '" + name + "' has invalid SNI '" + sni + "'");
  if (segment_size == 0)
    throw InvariantError("service '" + name + "' has zero segment size");
  if (content_size == 0 || content_size % segment_size != 0)
    throw InvariantError("service '" + name +
                         "': content size must be a positive multiple of the segment size");
}

ServiceProfile generic_profile() {
  return ServiceProfile{"generic", "generic.invalid", QosClass::video};
}

void DetectionConfig::validate() const {
  if (!(slot_fraction_a > 0.0 && slot_fraction_a < 0.5))
    throw InvariantError("slot fraction a must lie in (0, 0.5)");
  if (!(delta_mbps > 0.0)) throw InvariantError("throughput threshold must be positive");
  if (!(slot_seconds > 0.0)) throw InvariantError("slot duration must be positive");
  if (break_threshold_b < 1) throw InvariantError("break threshold must be >= 1");
  if (download_bytes == 0) throw InvariantError("download size must be positive");
  if (!(max_duration_s > 0.0)) throw InvariantError("max duration must be positive");
}

std::optional<double> ServiceRun::completion_time() const {
  if (!completed || samples.empty()) return std::nullopt;
  return samples.back().t;
}

void ServiceRun::validate(const DetectionConfig& config) const {
  service.validate();
  const auto& who = service.name;
  if (samples.empty()) throw InvariantError("run '" + who + "' has no samples");
  if (n_cb < 0) throw InvariantError("run '" + who + "' has negative break count");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].t >= 0.0))
      throw InvariantError("run '" + who + "' has a sample before session start");
    if (i == 0) continue;
    if (!(samples[i].t > samples[i - 1].t))
      throw InvariantError("run '" + who + "' sample times are not strictly increasing");
    if (samples[i].cum_bytes < samples[i - 1].cum_bytes)
      throw InvariantError("run '" + who + "' cumulative bytes decrease");
  }
  if (completed && samples.back().cum_bytes < config.download_bytes)
    throw InvariantError("run '" + who + "' marked completed below the download size");
}

void SessionLog::validate() const {
  config.validate();
  if (user_id.empty()) throw InvariantError("session has no user id");
  if (runs.size() < 2) throw InvariantError("session needs at least two service runs");
  std::set<std::string> names;
  std::set<std::string> snis;
  for (const auto& run : runs) {
    run.validate(config);
    if (run.service.qos_class != runs.front().service.qos_class)
      throw InvariantError("session mixes qos classes ('" + runs.front().service.name +
                           "' vs '" + run.service.name + "')");
    if (!names.insert(run.service.name).second)
      throw InvariantError("duplicate service '" + run.service.name + "' in session");
    if (!snis.insert(run.service.sni).second)
      throw InvariantError("duplicate SNI '" + run.service.sni + "' in session");
  }
}

const ServiceRun* SessionLog::find_run(std::string_view service) const {
  for (const auto& run : runs)
    if (run.service.name == service) return &run;
  return nullptr;
}

std::string iso8601_now() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto secs = system_clock::to_time_t(now);
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string make_user_id(std::uint64_t random_suffix) {
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%08x", static_cast<unsigned>(random_suffix & 0xffffffffu));
  return iso8601_now() + "-" + suffix;
}

}  // namespace tdprobe
