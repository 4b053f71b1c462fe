#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

using SSL = struct ssl_st;
using SSL_CTX = struct ssl_ctx_st;

namespace tdprobe {

// Session time runs `scale` times faster than wall time. All protocol
// quantities (pacing windows, deadlines, shaping rates) are expressed in
// session seconds; scale 1 is real time.
class SessionClock {
 public:
  using wall = std::chrono::steady_clock;

  explicit SessionClock(double scale = 1.0, wall::time_point origin = wall::now());

  double scale() const { return scale_; }
  wall::time_point origin() const { return origin_; }
  double now() const { return since(wall::now()); }
  double since(wall::time_point tp) const;
  wall::time_point wall_at(double session_s) const;
  wall::duration to_wall(double session_s) const;
  void sleep_until(double session_s) const;

 private:
  double scale_;
  wall::time_point origin_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Endpoint parse(std::string_view text);  // "host:port"
  std::string str() const;
};

// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();
  // Abortive close: the peer sees a TCP reset.
  void reset();
  void shutdown_both();

 private:
  int fd_ = -1;
};

void ignore_sigpipe();

Socket tcp_listen(const Endpoint& ep, int backlog = 128);
std::uint16_t local_port(const Socket& s);
Socket tcp_connect(const Endpoint& ep, std::chrono::milliseconds timeout);
void set_nonblocking(int fd, bool on);
void set_nodelay(int fd);
// accept(2) with close-on-exec and TCP_NODELAY; invalid socket on failure.
Socket tcp_accept(const Socket& listener);

enum class Ready { ok, timeout, error };
// Waits until fd is readable (or writable), the deadline passes, or `stop`
// becomes true.
Ready wait_fd(int fd, bool for_write, std::chrono::steady_clock::time_point deadline,
              const std::atomic<bool>* stop = nullptr);

// Sends everything, honouring the deadline; false on error or timeout.
bool send_all(int fd, std::span<const std::byte> data,
              std::chrono::steady_clock::time_point deadline,
              const std::atomic<bool>* stop = nullptr);

class TlsContext {
 public:
  // Server context presenting the given certificate, or a freshly generated
  // self-signed one when paths are empty. Protocol capped at TLS 1.2 so
  // in-path middleboxes can follow record types.
  static TlsContext server(const std::filesystem::path& cert = {},
                           const std::filesystem::path& key = {});
  // Client context that accepts the replay server's self-signed certificate.
  static TlsContext client();

  TlsContext(TlsContext&&) noexcept = default;
  TlsContext& operator=(TlsContext&&) noexcept = default;
  ~TlsContext();

  SSL_CTX* get() const { return ctx_.get(); }

 private:
  struct Free {
    void operator()(SSL_CTX* c) const;
  };
  explicit TlsContext(SSL_CTX* c) : ctx_(c) {}
  std::unique_ptr<SSL_CTX, Free> ctx_;
};

enum class IoStatus { ok, timeout, closed, error };

// TLS over a non-blocking socket with deadline-bounded operations.
class TlsStream {
 public:
  TlsStream(const TlsContext& ctx, Socket sock);
  TlsStream(TlsStream&&) noexcept;
  TlsStream& operator=(TlsStream&&) noexcept;
  ~TlsStream();

  // sni empty: no server_name extension.
  IoStatus connect(const std::string& sni, std::chrono::steady_clock::time_point deadline);
  IoStatus accept(std::chrono::steady_clock::time_point deadline,
                  const std::atomic<bool>* stop = nullptr);

  struct ReadResult {
    IoStatus status;
    std::size_t n;
  };
  ReadResult read_some(std::span<std::byte> buf, std::chrono::steady_clock::time_point deadline,
                       const std::atomic<bool>* stop = nullptr);
  IoStatus write_all(std::span<const std::byte> data,
                     std::chrono::steady_clock::time_point deadline,
                     const std::atomic<bool>* stop = nullptr);
  // Reads one '\n'-terminated line (terminator stripped), at most max_len bytes.
  IoStatus read_line(std::string& line, std::size_t max_len,
                     std::chrono::steady_clock::time_point deadline,
                     const std::atomic<bool>* stop = nullptr);

  void close_notify();
  SSL* ssl() const { return ssl_; }
  Socket& socket() { return sock_; }
  std::optional<std::string> server_name() const;

 private:
  IoStatus drive(int ret, std::chrono::steady_clock::time_point deadline,
                 const std::atomic<bool>* stop);

  Socket sock_;
  SSL* ssl_ = nullptr;
  std::string pending_;  // bytes read past a line terminator
};

}  // namespace tdprobe
