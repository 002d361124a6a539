#include "powlab/core/block.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "powlab/util/bytes.hpp"

namespace powlab {

bool BlockHash::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

std::string BlockHash::hex() const { return "0x" + to_hex(bytes); }

BlockHash BlockHash::from_hex(std::string_view hex) {
  auto raw = powlab::from_hex(hex);
  if (raw.size() != 32) throw DecodeError("block hash must be 32 bytes");
  BlockHash h;
  std::copy(raw.begin(), raw.end(), h.bytes.begin());
  return h;
}

std::array<std::uint8_t, kHeaderBytes> serialize_header(const BlockHeader& header) {
  std::vector<std::uint8_t> buf;
  buf.reserve(kHeaderBytes);
  ByteWriter w(buf);
  w.u32(header.experiment_id);
  w.u64(header.height);
  w.raw(header.parent_hash.bytes);
  w.u16(header.miner_id);
  w.u64(0);  // high half of the 128-bit difficulty field
  w.u64(header.difficulty);
  w.u64(header.timestamp_ms);
  w.u64(header.nonce);

  std::array<std::uint8_t, kHeaderBytes> out{};
  std::copy(buf.begin(), buf.end(), out.begin());
  return out;
}

BlockHash hash_header(const BlockHeader& header) {
  auto bytes = serialize_header(header);
  BlockHash h;
  SHA256(bytes.data(), bytes.size(), h.bytes.data());
  return h;
}

bool meets_difficulty(const BlockHash& hash, std::uint64_t difficulty) {
  if (difficulty == 0) throw std::invalid_argument("difficulty must be >= 1");

  // H < floor(2^256 / D)  <=>  (H + 1) * D <= 2^256.
  // Little-endian 64-bit limbs; one spare limb for the carry of H + 1.
  std::array<std::uint64_t, 5> a{};
  for (int limb = 0; limb < 4; ++limb) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | hash.bytes[static_cast<std::size_t>((3 - limb) * 8 + i)];
    a[static_cast<std::size_t>(limb)] = v;
  }
  for (auto& limb : a) {
    if (++limb != 0) break;
  }

  std::array<std::uint64_t, 6> product{};
  unsigned __int128 carry = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    unsigned __int128 p = static_cast<unsigned __int128>(a[i]) * difficulty + carry;
    product[i] = static_cast<std::uint64_t>(p);
    carry = p >> 64;
  }
  product[5] = static_cast<std::uint64_t>(carry);

  if (product[5] != 0) return false;
  if (product[4] == 0) return true;
  return product[4] == 1 && product[0] == 0 && product[1] == 0 && product[2] == 0 && product[3] == 0;
}

Block Block::sealed(const BlockHeader& header) { return Block{header, hash_header(header)}; }

bool Block::hash_is_consistent() const { return hash_header(header) == hash; }

std::array<std::uint8_t, kBlockBytes> encode_block(const Block& block) {
  std::array<std::uint8_t, kBlockBytes> out{};
  auto head = serialize_header(block.header);
  std::copy(head.begin(), head.end(), out.begin());
  std::copy(block.hash.bytes.begin(), block.hash.bytes.end(), out.begin() + kHeaderBytes);
  return out;
}

Block decode_block(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kBlockBytes) {
    throw DecodeError("block encoding must be 110 bytes, got " + std::to_string(bytes.size()));
  }
  ByteReader r(bytes);
  Block b;
  b.header.experiment_id = r.u32();
  b.header.height = r.u64();
  auto parent = r.raw(32);
  std::copy(parent.begin(), parent.end(), b.header.parent_hash.bytes.begin());
  b.header.miner_id = r.u16();
  if (r.u64() != 0) throw DecodeError("difficulty exceeds 64 bits");
  b.header.difficulty = r.u64();
  b.header.timestamp_ms = r.u64();
  b.header.nonce = r.u64();
  auto hash = r.raw(32);
  std::copy(hash.begin(), hash.end(), b.hash.bytes.begin());
  return b;
}

Block make_genesis(ExperimentId experiment_id) {
  BlockHeader h;
  h.experiment_id = experiment_id;
  h.difficulty = 1;
  return Block::sealed(h);
}

}  // namespace powlab
