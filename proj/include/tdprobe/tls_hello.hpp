#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tdprobe {

enum class HelloStatus {
  complete,   // a full ClientHello was parsed
  need_more,  // prefix of a plausible ClientHello
  not_tls,    // does not start with a TLS handshake record
  malformed,  // TLS framing present but the hello is inconsistent
};

struct HelloInfo {
  HelloStatus status = HelloStatus::need_more;
  std::optional<std::string> sni;  // host_name entry of server_name, raw bytes
};

// Parses the ClientHello at the start of a client->server byte stream. The
// handshake message may span several TLS records.
HelloInfo parse_client_hello(std::span<const std::byte> data);

namespace tls_content {
inline constexpr std::uint8_t change_cipher_spec = 20;
inline constexpr std::uint8_t alert = 21;
inline constexpr std::uint8_t handshake = 22;
inline constexpr std::uint8_t application_data = 23;
}  // namespace tls_content

// Follows TLS record framing across arbitrary chunk boundaries.
class RecordTracker {
 public:
  struct Start {
    std::size_t offset;  // within the scanned chunk
    std::uint8_t content_type;
  };

  // Record starts that fall inside `chunk`.
  std::vector<Start> scan(std::span<const std::byte> chunk);
  bool lost() const { return lost_; }

 private:
  std::uint8_t header_[5]{};
  std::size_t header_have_ = 0;
  std::size_t body_left_ = 0;
  bool lost_ = false;
};

}  // namespace tdprobe
