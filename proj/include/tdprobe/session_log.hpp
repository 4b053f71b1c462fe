#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tdprobe/model.hpp"

namespace tdprobe {

inline constexpr int kSessionLogSchema = 1;

// Session logs are JSON Lines. Every record carries a "record" tag:
//
//   {"record":"session","schema":1,"user_id":..,"isp":..,"started_at":..,"config":{..}}
//   {"record":"run","service":{"name":..,"sni":..,"qos_class":..,"content_size":..,"segment_size":..}}
//   {"record":"sample","service":..,"t":..,"bytes":..}
//   {"record":"end","service":..,"n_cb":..,"completed":..}
//
// The session record comes first; a run record precedes that service's
// samples; sample records of different services may interleave.
void write_session_log(const SessionLog& log, std::ostream& out);
void write_session_log(const SessionLog& log, const std::filesystem::path& path);

SessionLog read_session_log(std::istream& in);
SessionLog read_session_log(const std::filesystem::path& path);

std::string session_log_to_string(const SessionLog& log);

}  // namespace tdprobe
