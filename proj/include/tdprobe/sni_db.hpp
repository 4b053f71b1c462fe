#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdprobe/model.hpp"

namespace tdprobe {

// SNI database file: one service per line,
//
//   name,sni,qos_class[,content_size,segment_size]
//
// '#' starts a comment; blank lines are ignored. Sizes are in bytes and
// default to 20000000 / 2000000.
std::vector<ServiceProfile> parse_sni_db(std::string_view text,
                                         std::vector<std::string>* warnings = nullptr);
std::vector<ServiceProfile> load_sni_db(const std::filesystem::path& path,
                                        std::vector<std::string>* warnings = nullptr);

// Case-insensitive SNI -> profile lookup.
class SniIndex {
 public:
  SniIndex() = default;
  explicit SniIndex(std::vector<ServiceProfile> profiles);

  const ServiceProfile* find_sni(std::string_view sni) const;
  const ServiceProfile* find_name(std::string_view name) const;
  const std::vector<ServiceProfile>& profiles() const { return profiles_; }

 private:
  std::vector<ServiceProfile> profiles_;
  std::map<std::string, std::size_t, std::less<>> by_sni_;
};

std::string lowercase(std::string_view s);

}  // namespace tdprobe
