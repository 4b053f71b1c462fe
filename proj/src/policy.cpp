#include "tdprobe/policy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tdprobe/model.hpp"
#include "tdprobe/sni_db.hpp"
#include "tdprobe/tls_hello.hpp"

namespace tdprobe {

using nlohmann::json;

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::pass:
      return "pass";
    case ActionKind::throttle:
      return "throttle";
    case ActionKind::delayed_throttle:
      return "delayed_throttle";
    case ActionKind::reset_every:
      return "reset_every";
    case ActionKind::stall:
      return "stall";
  }
  return "?";
}

void Action::validate() const {
  switch (kind) {
    case ActionKind::pass:
      break;
    case ActionKind::delayed_throttle:
      if (!(onset_s >= 0.0)) throw InvariantError("throttle onset must be >= 0");
      [[fallthrough]];
    case ActionKind::throttle:
      if (!(rate_mbps > 0.0)) throw InvariantError("throttle rate must be positive");
      if (burst_bytes == 0) throw InvariantError("token bucket depth must be positive");
      break;
    case ActionKind::reset_every:
      if ((reset_segments == 0) == (reset_bytes == 0))
        throw InvariantError("reset_every needs exactly one of segments or bytes (>= 1)");
      break;
    case ActionKind::stall:
      if (!(stall_s > 0.0)) throw InvariantError("stall duration must be positive");
      if (!(onset_s >= 0.0)) throw InvariantError("stall delay must be >= 0");
      break;
  }
}

bool Policy::matches(std::string_view sni) const {
  if (match_sni == "*") return true;
  const auto host = lowercase(sni);
  const auto pattern = lowercase(match_sni);
  if (pattern.size() > 2 && pattern.starts_with("*.")) {
    auto suffix = pattern.substr(1);
    return host.size() > suffix.size() && host.ends_with(suffix);
  }
  return host == pattern;
}

void Policy::validate() const {
  if (match_sni.empty()) throw InvariantError("policy has an empty match_sni");
  if (label.empty()) throw InvariantError("policy for '" + match_sni + "' has no label");
  action.validate();
}

std::vector<Policy> parse_policies(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("policy file: ") + e.what(), 0);
  }
  if (!doc.is_array()) throw ParseError("policy file must hold a JSON array", 0);

  std::vector<Policy> out;
  for (const auto& item : doc) {
    try {
      Policy p;
      p.match_sni = item.at("match_sni").get<std::string>();
      p.label = item.at("label").get<std::string>();
      const auto& a = item.at("action");
      const auto type = a.at("type").get<std::string>();
      if (type == "pass") {
        p.action.kind = ActionKind::pass;
      } else if (type == "throttle" || type == "delayed_throttle") {
        p.action.kind = type == "throttle" ? ActionKind::throttle : ActionKind::delayed_throttle;
        p.action.rate_mbps = a.at("rate_mbps").get<double>();
        p.action.burst_bytes = a.value("burst_bytes", p.action.burst_bytes);
        if (p.action.kind == ActionKind::delayed_throttle) p.action.onset_s = a.at("onset_s").get<double>();
      } else if (type == "reset_every") {
        p.action.kind = ActionKind::reset_every;
        p.action.reset_segments = a.value("segments", std::uint64_t{0});
        p.action.reset_bytes = a.value("bytes", std::uint64_t{0});
      } else if (type == "stall") {
        p.action.kind = ActionKind::stall;
        p.action.stall_s = a.at("duration_s").get<double>();
        p.action.onset_s = a.value("onset_s", 0.0);
      } else {
        throw InvariantError("unknown action type '" + type + "'");
      }
      p.validate();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(std::string("policy entry ") + std::to_string(out.size()) + ": " + e.what(),
                       0);
    }
  }
  return out;
}

std::vector<Policy> load_policies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open policy file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_policies(ss.str());
}

Classification classify(std::span<const std::byte> client_hello, std::span<const Policy> policies) {
  auto hello = parse_client_hello(client_hello);
  if (hello.status != HelloStatus::complete)
    return Classification{std::string(kUnclassifiedLabel), std::nullopt, std::nullopt};
  if (!hello.sni) return Classification{std::string(kGenericHttpsLabel), std::nullopt, std::nullopt};
  for (std::size_t i = 0; i < policies.size(); ++i)
    if (policies[i].matches(*hello.sni)) return Classification{policies[i].label, hello.sni, i};
  return Classification{std::string(kGenericHttpsLabel), hello.sni, std::nullopt};
}

TokenBucket::TokenBucket(double rate_bytes_per_s, double capacity, double now)
    : rate_(rate_bytes_per_s), capacity_(capacity), tokens_(capacity), last_(now) {}

void TokenBucket::refill(double now) {
  if (now > last_) {
    tokens_ = std::min(capacity_, tokens_ + (now - last_) * rate_);
    last_ = now;
  }
}

double TokenBucket::available(double now) {
  refill(now);
  return tokens_;
}

void TokenBucket::consume(double n, double now) {
  refill(now);
  tokens_ -= n;
}

double TokenBucket::wait_for(double n, double now) {
  refill(now);
  if (tokens_ >= n) return 0.0;
  return (n - tokens_) / rate_;
}

}  // namespace tdprobe
