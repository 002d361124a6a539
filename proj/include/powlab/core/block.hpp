#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace powlab {

using NodeId = std::uint16_t;
using ExperimentId = std::uint32_t;

/// 32-byte SHA-256 digest identifying a block.
struct BlockHash {
  std::array<std::uint8_t, 32> bytes{};

  bool is_zero() const;
  std::string hex() const;  // 0x-prefixed, lowercase
  static BlockHash from_hex(std::string_view hex);

  friend bool operator==(const BlockHash&, const BlockHash&) = default;
  friend auto operator<=>(const BlockHash&, const BlockHash&) = default;
};

struct BlockHeader {
  std::uint64_t height = 0;
  BlockHash parent_hash;
  NodeId miner_id = 0;
  std::uint64_t difficulty = 1;
  std::uint64_t timestamp_ms = 0;
  std::uint64_t nonce = 0;
  ExperimentId experiment_id = 0;

  friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

struct Block {
  BlockHeader header;
  BlockHash hash;  // cached hash_header(header)

  /// Builds a block with its hash computed from the header.
  static Block sealed(const BlockHeader& header);

  bool hash_is_consistent() const;

  friend bool operator==(const Block&, const Block&) = default;
};

inline constexpr std::size_t kHeaderBytes = 78;
inline constexpr std::size_t kBlockBytes = kHeaderBytes + 32;

/// experiment_id:4 | height:8 | parent_hash:32 | miner_id:2 | difficulty:16 |
/// timestamp_ms:8 | nonce:8, big-endian.
std::array<std::uint8_t, kHeaderBytes> serialize_header(const BlockHeader& header);

BlockHash hash_header(const BlockHeader& header);

/// True iff the hash, read as a 256-bit big-endian integer, is below
/// floor(2^256 / difficulty). Throws std::invalid_argument for difficulty 0.
bool meets_difficulty(const BlockHash& hash, std::uint64_t difficulty);

/// Header bytes followed by the cached hash.
std::array<std::uint8_t, kBlockBytes> encode_block(const Block& block);

/// Inverse of encode_block. Throws DecodeError on a size mismatch or a
/// difficulty that does not fit 64 bits. Does not check the cached hash.
Block decode_block(std::span<const std::uint8_t> bytes);

/// The height-0 block for a run: parent all-zero, miner 0, nonce 0,
/// difficulty 1, timestamp 0. A pure function of the experiment id.
Block make_genesis(ExperimentId experiment_id);

/// Compact reference used by chain views and the miner.
struct BlockSummary {
  BlockHash hash;
  std::uint64_t height = 0;
  NodeId miner_id = 0;
  std::uint64_t timestamp_ms = 0;

  static BlockSummary of(const Block& block) {
    return {block.hash, block.header.height, block.header.miner_id, block.header.timestamp_ms};
  }

  friend bool operator==(const BlockSummary&, const BlockSummary&) = default;
};

}  // namespace powlab

template <>
struct std::hash<powlab::BlockHash> {
  std::size_t operator()(const powlab::BlockHash& h) const noexcept {
    std::size_t v = 0;
    for (std::size_t i = 0; i < sizeof(v); ++i) v = (v << 8) | h.bytes[i];
    return v;
  }
};
