#include "hello_capture.hpp"

#include <sys/socket.h>

#include <chrono>
#include <thread>

#include "tdprobe/net.hpp"
#include "tdprobe/tls_hello.hpp"

namespace tdprobe::testing {

std::vector<std::byte> capture_client_hello(const std::string& sni) {
  auto listener = tcp_listen(Endpoint{"127.0.0.1", 0});
  const Endpoint ep{"127.0.0.1", local_port(listener)};
  std::thread client([ep, sni] {
    try {
      auto ctx = TlsContext::client();
      TlsStream tls(ctx, tcp_connect(ep, std::chrono::milliseconds(2000)));
      tls.connect(sni, std::chrono::steady_clock::now() + std::chrono::seconds(2));
    } catch (...) {
    }
  });

  std::vector<std::byte> hello;
  if (wait_fd(listener.fd(), false, std::chrono::steady_clock::now() + std::chrono::seconds(2)) ==
      Ready::ok) {
    Socket conn(::accept(listener.fd(), nullptr, nullptr));
    std::byte buf[4096];
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (parse_client_hello(hello).status == HelloStatus::need_more &&
           wait_fd(conn.fd(), false, deadline) == Ready::ok) {
      auto n = ::recv(conn.fd(), buf, sizeof buf, 0);
      if (n <= 0) break;
      hello.insert(hello.end(), buf, buf + n);
    }
    conn.reset();
  }
  client.join();
  return hello;
}

std::optional<std::string> naive_sni(const std::vector<std::byte>& hello) {
  auto at = [&](std::size_t i) { return static_cast<unsigned>(hello.at(i)); };
  auto u16 = [&](std::size_t i) { return at(i) << 8 | at(i + 1); };
  // record header (5) + handshake header (4) + version (2) + random (32)
  std::size_t p = 5 + 4 + 2 + 32;
  p += 1 + at(p);   // session id
  p += 2 + u16(p);  // cipher suites
  p += 1 + at(p);   // compression methods
  const std::size_t end = p + 2 + u16(p);
  p += 2;
  while (p + 4 <= end) {
    const unsigned type = u16(p), len = u16(p + 2);
    if (type == 0) {
      // list length (2), name type (1), name length (2), name
      const unsigned name_len = u16(p + 4 + 3);
      std::string out;
      for (unsigned i = 0; i < name_len; ++i) out.push_back(static_cast<char>(at(p + 4 + 5 + i)));
      return out;
    }
    p += 4 + len;
  }
  return std::nullopt;
}

}  // namespace tdprobe::testing
