#include "tdprobe/session_log.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace tdprobe {

using nlohmann::json;

namespace {

json config_to_json(const DetectionConfig& c) {
  return json{{"delta_mbps", c.delta_mbps},
              {"slot_fraction_a", c.slot_fraction_a},
              {"slot_seconds", c.slot_seconds},
              {"break_threshold_b", c.break_threshold_b},
              {"download_bytes", c.download_bytes},
              {"max_duration_s", c.max_duration_s}};
}

DetectionConfig config_from_json(const json& j) {
  DetectionConfig c;
  c.delta_mbps = j.at("delta_mbps").get<double>();
  c.slot_fraction_a = j.at("slot_fraction_a").get<double>();
  c.slot_seconds = j.at("slot_seconds").get<double>();
  c.break_threshold_b = j.at("break_threshold_b").get<int>();
  c.download_bytes = j.at("download_bytes").get<std::uint64_t>();
  c.max_duration_s = j.at("max_duration_s").get<double>();
  return c;
}

json profile_to_json(const ServiceProfile& p) {
  return json{{"name", p.name},
              {"sni", p.sni},
              {"qos_class", std::string(to_string(p.qos_class))},
              {"content_size", p.content_size},
              {"segment_size", p.segment_size}};
}

ServiceProfile profile_from_json(const json& j) {
  ServiceProfile p;
  p.name = j.at("name").get<std::string>();
  p.sni = j.at("sni").get<std::string>();
  p.qos_class = qos_class_from_string(j.at("qos_class").get<std::string>());
  p.content_size = j.at("content_size").get<std::uint64_t>();
  p.segment_size = j.at("segment_size").get<std::uint64_t>();
  return p;
}

}  // namespace

void write_session_log(const SessionLog& log, std::ostream& out) {
  log.validate();
  out << json{{"record", "session"},
              {"schema", kSessionLogSchema},
              {"user_id", log.user_id},
              {"isp", log.isp},
              {"started_at", log.started_at},
              {"config", config_to_json(log.config)}}
             .dump()
      << '\n';
  for (const auto& run : log.runs)
    out << json{{"record", "run"}, {"service", profile_to_json(run.service)}}.dump() << '\n';
  for (const auto& run : log.runs)
    for (const auto& s : run.samples)
      out << json{{"record", "sample"},
                  {"service", run.service.name},
                  {"t", s.t},
                  {"bytes", s.cum_bytes}}
                 .dump()
          << '\n';
  for (const auto& run : log.runs)
    out << json{{"record", "end"},
                {"service", run.service.name},
                {"n_cb", run.n_cb},
                {"completed", run.completed}}
               .dump()
        << '\n';
}

void write_session_log(const SessionLog& log, const std::filesystem::path& path) {
  std::ostringstream buf;
  write_session_log(log, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << buf.str();
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string session_log_to_string(const SessionLog& log) {
  std::ostringstream buf;
  write_session_log(log, buf);
  return buf.str();
}

SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  bool have_session = false;
  std::map<std::string, std::size_t> run_index;
  std::map<std::string, bool> ended;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    try {
      const auto kind = rec.at("record").get<std::string>();
      if (kind == "session") {
        if (have_session) throw ParseError("second session record", line_no);
        const int schema = rec.at("schema").get<int>();
        if (schema != kSessionLogSchema)
          throw SchemaError("unsupported session log schema " + std::to_string(schema) +
                            " (expected " + std::to_string(kSessionLogSchema) + ")");
        log.user_id = rec.at("user_id").get<std::string>();
        log.isp = rec.at("isp").get<std::string>();
        log.started_at = rec.at("started_at").get<std::string>();
        log.config = config_from_json(rec.at("config"));
        have_session = true;
        continue;
      }
      if (!have_session) throw ParseError("record before session header", line_no);
      if (kind == "run") {
        auto profile = profile_from_json(rec.at("service"));
        if (run_index.count(profile.name))
          throw ParseError("duplicate run for '" + profile.name + "'", line_no);
        run_index.emplace(profile.name, log.runs.size());
        log.runs.push_back(ServiceRun{std::move(profile), {}, 0, false});
      } else if (kind == "sample" || kind == "end") {
        const auto service = rec.at("service").get<std::string>();
        auto it = run_index.find(service);
        if (it == run_index.end())
          throw ParseError("record for undeclared service '" + service + "'", line_no);
        auto& run = log.runs[it->second];
        if (ended[service]) throw ParseError("record after end of '" + service + "'", line_no);
        if (kind == "sample") {
          run.samples.push_back(
              ByteSample{rec.at("t").get<double>(), rec.at("bytes").get<std::uint64_t>()});
        } else {
          run.n_cb = rec.at("n_cb").get<int>();
          run.completed = rec.at("completed").get<bool>();
          ended[service] = true;
        }
      } else {
        throw ParseError("unknown record kind '" + kind + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record field: ") + e.what(), line_no);
    } catch (const InvariantError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_session) throw ParseError("missing session record", line_no);
  for (const auto& run : log.runs)
    if (!ended[run.service.name])
      throw ParseError("run '" + run.service.name + "' has no end record", line_no);
  log.validate();
  return log;
}

SessionLog read_session_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open session log '" + path.string() + "'");
  return read_session_log(in);
}

}  // namespace tdprobe
