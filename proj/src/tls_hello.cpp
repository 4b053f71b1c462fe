#include "tdprobe/tls_hello.hpp"

#include <algorithm>

namespace tdprobe {

namespace {

class Reader {
 public:
  Reader() = default;
  explicit Reader(std::span<const std::uint8_t> d) : d_(d) {}

  bool u8(std::uint8_t& v) {
    if (left() < 1) return false;
    v = d_[pos_++];
    return true;
  }
  bool u16(std::uint16_t& v) {
    if (left() < 2) return false;
    v = static_cast<std::uint16_t>(d_[pos_] << 8 | d_[pos_ + 1]);
    pos_ += 2;
    return true;
  }
  bool u24(std::uint32_t& v) {
    if (left() < 3) return false;
    v = static_cast<std::uint32_t>(d_[pos_] << 16 | d_[pos_ + 1] << 8 | d_[pos_ + 2]);
    pos_ += 3;
    return true;
  }
  bool skip(std::size_t n) {
    if (left() < n) return false;
    pos_ += n;
    return true;
  }
  bool sub(std::size_t n, Reader& out) {
    if (left() < n) return false;
    out = Reader(d_.subspan(pos_, n));
    pos_ += n;
    return true;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    auto s = d_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t left() const { return d_.size() - pos_; }

 private:
  std::span<const std::uint8_t> d_;
  std::size_t pos_ = 0;
};

HelloInfo parse_hello_body(std::span<const std::uint8_t> body) {
  HelloInfo out{HelloStatus::malformed, std::nullopt};
  Reader r(body);
  Reader sid, suites, comp, exts;
  std::uint8_t len8 = 0;
  std::uint16_t len16 = 0;
  if (!r.skip(2 + 32)) return out;  // legacy_version, random
  if (!r.u8(len8) || !r.sub(len8, sid)) return out;
  if (!r.u16(len16) || !r.sub(len16, suites)) return out;
  if (!r.u8(len8) || !r.sub(len8, comp)) return out;
  out.status = HelloStatus::complete;
  if (r.left() == 0) return out;  // no extensions
  if (!r.u16(len16) || !r.sub(len16, exts)) return {HelloStatus::malformed, std::nullopt};

  while (exts.left() > 0) {
    std::uint16_t type = 0, elen = 0;
    Reader ext;
    if (!exts.u16(type) || !exts.u16(elen) || !exts.sub(elen, ext))
      return {HelloStatus::malformed, std::nullopt};
    if (type != 0) continue;  // server_name
    std::uint16_t list_len = 0;
    Reader list;
    if (!ext.u16(list_len) || !ext.sub(list_len, list)) return {HelloStatus::malformed, std::nullopt};
    while (list.left() > 0) {
      std::uint8_t name_type = 0;
      std::uint16_t name_len = 0;
      if (!list.u8(name_type) || !list.u16(name_len) || list.left() < name_len)
        return {HelloStatus::malformed, std::nullopt};
      auto name = list.take(name_len);
      if (name_type == 0 && !out.sni) out.sni = std::string(name.begin(), name.end());
    }
  }
  return out;
}

}  // namespace

HelloInfo parse_client_hello(std::span<const std::byte> data) {
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(data.data()),
                                            data.size());
  if (bytes.empty()) return {HelloStatus::need_more, std::nullopt};
  if (bytes[0] != tls_content::handshake) return {HelloStatus::not_tls, std::nullopt};
  if (bytes.size() >= 2 && bytes[1] != 3) return {HelloStatus::not_tls, std::nullopt};

  // Reassemble the handshake message from consecutive handshake records.
  std::vector<std::uint8_t> hs;
  std::size_t pos = 0;
  for (;;) {
    if (hs.size() >= 4) {
      if (hs[0] != 1) return {HelloStatus::malformed, std::nullopt};
      const std::size_t msg_len = static_cast<std::size_t>(hs[1]) << 16 | hs[2] << 8 | hs[3];
      if (hs.size() >= 4 + msg_len)
        return parse_hello_body(std::span<const std::uint8_t>(hs).subspan(4, msg_len));
    }
    if (bytes.size() < pos + 5) return {HelloStatus::need_more, std::nullopt};
    if (bytes[pos] != tls_content::handshake || bytes[pos + 1] != 3)
      return {HelloStatus::malformed, std::nullopt};
    const std::size_t rec_len = static_cast<std::size_t>(bytes[pos + 3]) << 8 | bytes[pos + 4];
    if (rec_len == 0 || rec_len > (1u << 14) + 2048) return {HelloStatus::malformed, std::nullopt};
    if (bytes.size() < pos + 5 + rec_len) {
      // Whatever is here is still a prefix; keep waiting for the record.
      return {HelloStatus::need_more, std::nullopt};
    }
    hs.insert(hs.end(), bytes.begin() + static_cast<std::ptrdiff_t>(pos + 5),
              bytes.begin() + static_cast<std::ptrdiff_t>(pos + 5 + rec_len));
    pos += 5 + rec_len;
  }
}

std::vector<RecordTracker::Start> RecordTracker::scan(std::span<const std::byte> chunk) {
  std::vector<Start> starts;
  std::size_t i = 0;
  while (i < chunk.size() && !lost_) {
    if (body_left_ > 0) {
      auto n = std::min(body_left_, chunk.size() - i);
      body_left_ -= n;
      i += n;
      continue;
    }
    if (header_have_ == 0) starts.push_back(Start{i, static_cast<std::uint8_t>(chunk[i])});
    header_[header_have_++] = static_cast<std::uint8_t>(chunk[i++]);
    if (header_have_ == 5) {
      header_have_ = 0;
      if (header_[1] != 3) {
        lost_ = true;
        break;
      }
      body_left_ = static_cast<std::size_t>(header_[3]) << 8 | header_[4];
    }
  }
  return starts;
}

}  // namespace tdprobe
