#include "xfermon/codec.hpp"

#include <bit>
#include <cstring>

#include "xfermon/error.hpp"

namespace xfermon {
namespace {

std::size_t varint_size(std::uint64_t v) {
  std::size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

std::int64_t unzigzag(std::uint64_t v) {
  return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_id(std::vector<std::uint8_t>& out, const std::string& id) {
  if (id.size() > 255) throw DomainError("id longer than 255 bytes cannot be encoded");
  out.push_back(static_cast<std::uint8_t>(id.size()));
  out.insert(out.end(), id.begin(), id.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
    }
    throw DataError("varint too long");
  }

  std::string str() {
    const std::size_t n = u8();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("truncated envelope");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t encoded_size(const MetricEnvelope& env) {
  std::size_t n = 3 + 1 + env.transfer_id.size() + 1 + env.testbed_id.size();
  n += varint_size(zigzag(env.timestamp));
  n += varint_size(env.values.size());
  for (const auto& [id, v] : env.values) n += varint_size(to_index(id)) + 8;
  return n;
}

std::vector<std::uint8_t> encode(const MetricEnvelope& env) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(env));
  out.push_back(kEnvelopeMagic);
  out.push_back(kEnvelopeVersion);
  std::uint8_t flags = 0;
  if (env.profile == Profile::Full142) flags |= 0x01;
  if (env.gap) flags |= 0x02;
  out.push_back(flags);
  put_id(out, env.transfer_id);
  put_id(out, env.testbed_id);
  put_varint(out, zigzag(env.timestamp));
  put_varint(out, env.values.size());
  for (const auto& [id, v] : env.values) {
    put_varint(out, to_index(id));
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

MetricEnvelope decode(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  if (r.u8() != kEnvelopeMagic) throw DataError("bad envelope magic");
  if (r.u8() != kEnvelopeVersion) throw DataError("unsupported envelope version");
  const std::uint8_t flags = r.u8();
  if (flags & ~0x03) throw DataError("unknown envelope flags");

  MetricEnvelope env;
  env.profile = (flags & 0x01) ? Profile::Full142 : Profile::Minimal14;
  env.gap = (flags & 0x02) != 0;
  env.transfer_id = r.str();
  env.testbed_id = r.str();
  env.timestamp = unzigzag(r.varint());
  const std::uint64_t count = r.varint();
  if (count > kFullCount) throw DataError("too many values");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t idx = r.varint();
    if (idx >= kFullCount) throw DataError("unknown metric index " + std::to_string(idx));
    const MetricId id{static_cast<std::uint16_t>(idx)};
    if (!in_profile(id, env.profile)) throw DataError("metric index outside profile");
    const double v = std::bit_cast<double>(r.u64());
    if (!env.values.emplace(id, v).second) throw DataError("duplicate metric index");
  }
  if (!r.done()) throw DataError("trailing bytes after envelope");
  return env;
}

void append_frame(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFrame) throw DomainError("frame payload exceeds 64 KiB");
  const auto n = static_cast<std::uint32_t>(payload.size());
  out.push_back(static_cast<std::uint8_t>(n >> 24));
  out.push_back(static_cast<std::uint8_t>(n >> 16));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  out.push_back(static_cast<std::uint8_t>(n));
  out.insert(out.end(), payload.begin(), payload.end());
}

std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + kFrameHeader);
  append_frame(out, payload);
  return out;
}

std::uint32_t read_frame_length(std::span<const std::uint8_t, kFrameHeader> h) {
  return (std::uint32_t{h[0]} << 24) | (std::uint32_t{h[1]} << 16) | (std::uint32_t{h[2]} << 8) | h[3];
}

}  // namespace xfermon
