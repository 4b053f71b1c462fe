#include "tdprobe/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

#include "tdprobe/model.hpp"

namespace tdprobe {

using steady = std::chrono::steady_clock;

SessionClock::SessionClock(double scale, wall::time_point origin)
    : scale_(scale), origin_(origin) {
  if (!(scale > 0.0)) throw InvariantError("time scale must be positive");
}

double SessionClock::since(wall::time_point tp) const {
  return std::chrono::duration<double>(tp - origin_).count() * scale_;
}

SessionClock::wall::duration SessionClock::to_wall(double session_s) const {
  return std::chrono::duration_cast<wall::duration>(
      std::chrono::duration<double>(session_s / scale_));
}

SessionClock::wall::time_point SessionClock::wall_at(double session_s) const {
  return origin_ + to_wall(session_s);
}

void SessionClock::sleep_until(double session_s) const {
  std::this_thread::sleep_until(wall_at(session_s));
}

Endpoint Endpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size())
    throw InvariantError("endpoint '" + std::string(text) + "' is not host:port");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "0.0.0.0";
  int port = 0;
  for (char c : text.substr(colon + 1)) {
    if (c < '0' || c > '9') throw InvariantError("bad port in '" + std::string(text) + "'");
    port = port * 10 + (c - '0');
    if (port > 65535) throw InvariantError("bad port in '" + std::string(text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::reset() {
  if (fd_ < 0) return;
  linger lg{1, 0};
  ::setsockopt(fd_, SOL_SOCKET, SO_LINGER, &lg, sizeof lg);
  close();
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void ignore_sigpipe() { ::signal(SIGPIPE, SIG_IGN); }

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw ConnectError("cannot resolve host '" + ep.host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

void set_nonblocking(int fd, bool on) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Socket tcp_accept(const Socket& listener) {
  Socket s(::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC));
  if (s.valid()) set_nodelay(s.fd());
  return s;
}

Socket tcp_listen(const Endpoint& ep, int backlog) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError("socket: " + errno_text());
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = resolve(ep);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw IoError("bind " + ep.str() + ": " + errno_text());
  if (::listen(s.fd(), backlog) != 0) throw IoError("listen " + ep.str() + ": " + errno_text());
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

Socket tcp_connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  auto addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError("socket: " + errno_text());
  set_nonblocking(s.fd(), true);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS)
    throw ConnectError("connect " + ep.str() + ": " + errno_text());
  if (rc != 0) {
    if (wait_fd(s.fd(), true, steady::now() + timeout) != Ready::ok)
      throw ConnectError("connect " + ep.str() + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw ConnectError("connect " + ep.str() + ": " + std::strerror(err));
  }
  set_nonblocking(s.fd(), false);
  set_nodelay(s.fd());
  return s;
}

Ready wait_fd(int fd, bool for_write, steady::time_point deadline,
              const std::atomic<bool>* stop) {
  for (;;) {
    if (stop && stop->load()) return Ready::error;
    auto now = steady::now();
    if (now >= deadline) return Ready::timeout;
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    // Short slices keep the stop flag responsive.
    int slice = static_cast<int>(std::min<long long>(left, stop ? 50 : 1000));
    pollfd p{fd, static_cast<short>(for_write ? POLLOUT : POLLIN), 0};
    int rc = ::poll(&p, 1, slice);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return Ready::error;
    }
    if (rc > 0) return Ready::ok;  // includes POLLERR/POLLHUP; the next I/O call reports them
  }
}

bool send_all(int fd, std::span<const std::byte> data, steady::time_point deadline,
              const std::atomic<bool>* stop) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n > 0) {
      data = data.subspan(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      if (wait_fd(fd, true, deadline, stop) != Ready::ok) return false;
      continue;
    }
    return false;
  }
  return true;
}

// ---- TLS ------------------------------------------------------------------

void TlsContext::Free::operator()(SSL_CTX* c) const { SSL_CTX_free(c); }

TlsContext::~TlsContext() = default;

namespace {

std::string ssl_error_text() {
  unsigned long e = ERR_get_error();
  if (e == 0) return "unknown TLS error";
  char buf[256];
  ERR_error_string_n(e, buf, sizeof buf);
  ERR_clear_error();
  return buf;
}

void install_self_signed(SSL_CTX* ctx) {
  EVP_PKEY* key = EVP_EC_gen("P-256");
  if (!key) throw IoError("key generation failed: " + ssl_error_text());
  X509* cert = X509_new();
  ASN1_INTEGER_set(X509_get_serialNumber(cert), 1);
  X509_gmtime_adj(X509_getm_notBefore(cert), -3600);
  X509_gmtime_adj(X509_getm_notAfter(cert), 3600L * 24 * 365);
  X509_set_pubkey(cert, key);
  X509_NAME* name = X509_get_subject_name(cert);
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                             reinterpret_cast<const unsigned char*>("replay-server"), -1, -1, 0);
  X509_set_issuer_name(cert, name);
  const bool ok = X509_sign(cert, key, EVP_sha256()) > 0 &&
                  SSL_CTX_use_certificate(ctx, cert) == 1 &&
                  SSL_CTX_use_PrivateKey(ctx, key) == 1;
  X509_free(cert);
  EVP_PKEY_free(key);
  if (!ok) throw IoError("self-signed certificate setup failed: " + ssl_error_text());
}

}  // namespace

TlsContext TlsContext::server(const std::filesystem::path& cert, const std::filesystem::path& key) {
  SSL_CTX* ctx = SSL_CTX_new(TLS_server_method());
  if (!ctx) throw IoError("SSL_CTX_new: " + ssl_error_text());
  TlsContext out(ctx);
  SSL_CTX_set_min_proto_version(ctx, TLS1_2_VERSION);
  SSL_CTX_set_max_proto_version(ctx, TLS1_2_VERSION);
  SSL_CTX_set_options(ctx, SSL_OP_NO_TICKET);
  if (cert.empty() != key.empty())
    throw InvariantError("certificate and key must be given together");
  if (cert.empty()) {
    install_self_signed(ctx);
  } else {
    if (SSL_CTX_use_certificate_chain_file(ctx, cert.c_str()) != 1 ||
        SSL_CTX_use_PrivateKey_file(ctx, key.c_str(), SSL_FILETYPE_PEM) != 1)
      throw IoError("cannot load certificate/key: " + ssl_error_text());
  }
  return out;
}

TlsContext TlsContext::client() {
  SSL_CTX* ctx = SSL_CTX_new(TLS_client_method());
  if (!ctx) throw IoError("SSL_CTX_new: " + ssl_error_text());
  SSL_CTX_set_verify(ctx, SSL_VERIFY_NONE, nullptr);
  SSL_CTX_set_min_proto_version(ctx, TLS1_2_VERSION);
  return TlsContext(ctx);
}

TlsStream::TlsStream(const TlsContext& ctx, Socket sock) : sock_(std::move(sock)) {
  set_nonblocking(sock_.fd(), true);
  ssl_ = SSL_new(ctx.get());
  if (!ssl_) throw IoError("SSL_new: " + ssl_error_text());
  SSL_set_fd(ssl_, sock_.fd());
  SSL_set_mode(ssl_, SSL_MODE_ENABLE_PARTIAL_WRITE | SSL_MODE_ACCEPT_MOVING_WRITE_BUFFER);
}

TlsStream::TlsStream(TlsStream&& o) noexcept
    : sock_(std::move(o.sock_)), ssl_(std::exchange(o.ssl_, nullptr)),
      pending_(std::move(o.pending_)) {}

TlsStream& TlsStream::operator=(TlsStream&& o) noexcept {
  if (this != &o) {
    if (ssl_) SSL_free(ssl_);
    sock_ = std::move(o.sock_);
    ssl_ = std::exchange(o.ssl_, nullptr);
    pending_ = std::move(o.pending_);
  }
  return *this;
}

TlsStream::~TlsStream() {
  if (ssl_) SSL_free(ssl_);
}

IoStatus TlsStream::drive(int ret, steady::time_point deadline, const std::atomic<bool>* stop) {
  int err = SSL_get_error(ssl_, ret);
  switch (err) {
    case SSL_ERROR_WANT_READ:
    case SSL_ERROR_WANT_WRITE: {
      auto r = wait_fd(sock_.fd(), err == SSL_ERROR_WANT_WRITE, deadline, stop);
      if (r == Ready::ok) return IoStatus::ok;  // retry
      return r == Ready::timeout ? IoStatus::timeout : IoStatus::error;
    }
    case SSL_ERROR_ZERO_RETURN:
      return IoStatus::closed;
    default:
      ERR_clear_error();
      return IoStatus::error;
  }
}

IoStatus TlsStream::connect(const std::string& sni, steady::time_point deadline) {
  if (!sni.empty()) SSL_set_tlsext_host_name(ssl_, sni.c_str());
  for (;;) {
    int rc = SSL_connect(ssl_);
    if (rc == 1) return IoStatus::ok;
    auto st = drive(rc, deadline, nullptr);
    if (st != IoStatus::ok) return st == IoStatus::closed ? IoStatus::error : st;
  }
}

IoStatus TlsStream::accept(steady::time_point deadline, const std::atomic<bool>* stop) {
  for (;;) {
    int rc = SSL_accept(ssl_);
    if (rc == 1) return IoStatus::ok;
    auto st = drive(rc, deadline, stop);
    if (st != IoStatus::ok) return st == IoStatus::closed ? IoStatus::error : st;
  }
}

TlsStream::ReadResult TlsStream::read_some(std::span<std::byte> buf, steady::time_point deadline,
                                           const std::atomic<bool>* stop) {
  if (!pending_.empty()) {
    auto n = std::min(buf.size(), pending_.size());
    std::memcpy(buf.data(), pending_.data(), n);
    pending_.erase(0, n);
    return {IoStatus::ok, n};
  }
  for (;;) {
    int rc = SSL_read(ssl_, buf.data(), static_cast<int>(std::min<std::size_t>(buf.size(), 1 << 20)));
    if (rc > 0) return {IoStatus::ok, static_cast<std::size_t>(rc)};
    auto st = drive(rc, deadline, stop);
    if (st != IoStatus::ok) return {st, 0};
  }
}

IoStatus TlsStream::write_all(std::span<const std::byte> data, steady::time_point deadline,
                              const std::atomic<bool>* stop) {
  while (!data.empty()) {
    int rc = SSL_write(ssl_, data.data(), static_cast<int>(std::min<std::size_t>(data.size(), 1 << 20)));
    if (rc > 0) {
      data = data.subspan(static_cast<std::size_t>(rc));
      continue;
    }
    auto st = drive(rc, deadline, stop);
    if (st != IoStatus::ok) return st;
  }
  return IoStatus::ok;
}

IoStatus TlsStream::read_line(std::string& line, std::size_t max_len, steady::time_point deadline,
                              const std::atomic<bool>* stop) {
  line.clear();
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return IoStatus::ok;
    }
    if (pending_.size() > max_len) return IoStatus::error;
    std::byte buf[4096];
    int rc = SSL_read(ssl_, buf, sizeof buf);
    if (rc > 0) {
      pending_.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(rc));
      continue;
    }
    auto st = drive(rc, deadline, stop);
    if (st != IoStatus::ok) return st;
  }
}

void TlsStream::close_notify() {
  if (ssl_) SSL_shutdown(ssl_);
}

std::optional<std::string> TlsStream::server_name() const {
  const char* name = SSL_get_servername(ssl_, TLSEXT_NAMETYPE_host_name);
  if (!name) return std::nullopt;
  return std::string(name);
}

}  // namespace tdprobe
