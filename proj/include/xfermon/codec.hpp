#pragma once

// Binary envelope encoding and the length-prefixed frame used on the wire.
//
// Envelope payload (all multi-byte integers big-endian, varints LEB128):
//
//   u8      magic 0x58 ('X')
//   u8      format version (1)
//   u8      flags: bit0 profile (0 = Minimal14, 1 = Full142), bit1 gap marker
//   u8      transfer_id length, then that many bytes
//   u8      testbed_id length, then that many bytes
//   varint  timestamp, zigzag-encoded signed seconds
//   varint  value count n
//   n x { varint catalog index, u64 IEEE-754 bits of the value }
//
// Frame: u32 payload length followed by the payload, at most kMaxFrame bytes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xfermon/metrics.hpp"

namespace xfermon {

inline constexpr std::uint8_t kEnvelopeMagic = 0x58;
inline constexpr std::uint8_t kEnvelopeVersion = 1;
inline constexpr std::size_t kMaxFrame = 64 * 1024;
inline constexpr std::size_t kFrameHeader = 4;

std::vector<std::uint8_t> encode(const MetricEnvelope& env);
std::size_t encoded_size(const MetricEnvelope& env);

// Throws DataError on any malformed input (bad magic, truncation, unknown or
// duplicate key index, key outside the declared profile, trailing bytes).
MetricEnvelope decode(std::span<const std::uint8_t> payload);

void append_frame(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload);
std::uint32_t read_frame_length(std::span<const std::uint8_t, kFrameHeader> header);

}  // namespace xfermon
