#include "tdprobe/sni_db.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace tdprobe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_size(std::string_view field, std::size_t line_no) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError("bad size '" + std::string(field) + "'", line_no);
  return value;
}

}  // namespace

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<ServiceProfile> parse_sni_db(std::string_view text,
                                         std::vector<std::string>* warnings) {
  std::vector<ServiceProfile> profiles;
  std::map<std::string, std::string> owner_of_sni;
  std::map<std::string, std::size_t> line_of_name;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto fields = split_fields(line);
    if (fields.size() != 3 && fields.size() != 5)
      throw ParseError("expected 3 or 5 comma-separated fields", line_no);

    ServiceProfile p;
    p.name = std::string(fields[0]);
    p.sni = lowercase(fields[1]);
    try {
      p.qos_class = qos_class_from_string(fields[2]);
    } catch (const InvariantError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (fields.size() == 5) {
      p.content_size = parse_size(fields[3], line_no);
      p.segment_size = parse_size(fields[4], line_no);
    }
    try {
      p.validate();
    } catch (const InvariantError& e) {
      throw ParseError(e.what(), line_no);
    }

    if (auto it = owner_of_sni.find(p.sni); it != owner_of_sni.end())
      throw InvariantError("duplicate SNI '" + p.sni + "' shared by services '" + it->second +
                           "' and '" + p.name + "' (line " + std::to_string(line_no) + ")");
    if (line_of_name.count(p.name))
      throw ParseError("duplicate service name '" + p.name + "'", line_no);
    owner_of_sni.emplace(p.sni, p.name);
    line_of_name.emplace(p.name, line_no);
    profiles.push_back(std::move(p));
  }

  if (profiles.empty()) {
    std::string msg = "SNI database contains no services";
    spdlog::warn(msg);
    if (warnings) warnings->push_back(msg);
  }
  return profiles;
}

std::vector<ServiceProfile> load_sni_db(const std::filesystem::path& path,
                                        std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SNI database '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sni_db(ss.str(), warnings);
}

SniIndex::SniIndex(std::vector<ServiceProfile> profiles) : profiles_(std::move(profiles)) {
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    auto key = lowercase(profiles_[i].sni);
    if (!by_sni_.emplace(key, i).second)
      throw InvariantError("duplicate SNI '" + key + "'");
  }
}

const ServiceProfile* SniIndex::find_sni(std::string_view sni) const {
  auto it = by_sni_.find(lowercase(sni));
  return it == by_sni_.end() ? nullptr : &profiles_[it->second];
}

const ServiceProfile* SniIndex::find_name(std::string_view name) const {
  for (const auto& p : profiles_)
    if (p.name == name) return &p;
  return nullptr;
}

}  // namespace tdprobe
