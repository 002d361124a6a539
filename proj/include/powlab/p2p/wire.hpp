#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "powlab/core/block.hpp"

namespace powlab::p2p {

// frame = len:4 | kind:1 | sender:2 | payload, big-endian; len counts the
// payload only.
inline constexpr std::size_t kFrameHeaderBytes = 7;
inline constexpr std::uint32_t kMaxPayloadBytes = 1 << 16;

enum class MessageKind : std::uint8_t {
  hello = 1,
  new_block = 2,
  get_block = 3,
  block_response = 4,
  get_head = 5,
  head_response = 6,
};

std::string_view to_string(MessageKind kind);

struct Hello {
  ExperimentId experiment_id = 0;
  BlockHash genesis_hash;
  BlockHash head_hash;
  std::uint64_t head_height = 0;
  NodeId node_id = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct NewBlock {
  Block block;
  friend bool operator==(const NewBlock&, const NewBlock&) = default;
};

struct GetBlock {
  BlockHash hash;
  friend bool operator==(const GetBlock&, const GetBlock&) = default;
};

struct BlockResponse {
  std::optional<Block> block;  // nullopt = not found
  friend bool operator==(const BlockResponse&, const BlockResponse&) = default;
};

struct GetHead {
  friend bool operator==(const GetHead&, const GetHead&) = default;
};

struct HeadResponse {
  BlockHash head_hash;
  std::uint64_t head_height = 0;
  friend bool operator==(const HeadResponse&, const HeadResponse&) = default;
};

using Payload = std::variant<Hello, NewBlock, GetBlock, BlockResponse, GetHead, HeadResponse>;

struct WireMessage {
  NodeId sender = 0;
  Payload payload;

  MessageKind kind() const;
  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

struct FrameHeader {
  std::uint32_t payload_length = 0;
  MessageKind kind = MessageKind::hello;
  NodeId sender = 0;
};

std::vector<std::uint8_t> encode_frame(const WireMessage& msg);

/// Parses the fixed 7-byte prefix. Throws DecodeError on an unknown kind or
/// an oversized payload.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);

/// Decodes a payload whose kind and sender come from its frame header.
WireMessage decode_payload(const FrameHeader& header, std::span<const std::uint8_t> payload);

/// Decodes exactly one complete frame.
WireMessage decode_frame(std::span<const std::uint8_t> frame);

}  // namespace powlab::p2p
