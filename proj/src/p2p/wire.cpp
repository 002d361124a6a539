#include "powlab/p2p/wire.hpp"

#include <algorithm>

#include "powlab/util/bytes.hpp"

namespace powlab::p2p {

namespace {

BlockHash read_hash(ByteReader& r) {
  BlockHash h;
  auto raw = r.raw(32);
  std::copy(raw.begin(), raw.end(), h.bytes.begin());
  return h;
}

struct PayloadWriter {
  ByteWriter& w;

  void operator()(const Hello& m) const {
    w.u32(m.experiment_id);
    w.raw(m.genesis_hash.bytes);
    w.raw(m.head_hash.bytes);
    w.u64(m.head_height);
    w.u16(m.node_id);
  }
  void operator()(const NewBlock& m) const { w.raw(encode_block(m.block)); }
  void operator()(const GetBlock& m) const { w.raw(m.hash.bytes); }
  void operator()(const BlockResponse& m) const {
    w.u8(m.block ? 1 : 0);
    if (m.block) w.raw(encode_block(*m.block));
  }
  void operator()(const GetHead&) const {}
  void operator()(const HeadResponse& m) const {
    w.raw(m.head_hash.bytes);
    w.u64(m.head_height);
  }
};

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::hello: return "hello";
    case MessageKind::new_block: return "new-block";
    case MessageKind::get_block: return "get-block";
    case MessageKind::block_response: return "block-response";
    case MessageKind::get_head: return "get-head";
    case MessageKind::head_response: return "head-response";
  }
  return "?";
}

MessageKind WireMessage::kind() const {
  return static_cast<MessageKind>(payload.index() + 1);
}

std::vector<std::uint8_t> encode_frame(const WireMessage& msg) {
  std::vector<std::uint8_t> body;
  ByteWriter bw(body);
  std::visit(PayloadWriter{bw}, msg.payload);

  std::vector<std::uint8_t> frame;
  frame.reserve(kFrameHeaderBytes + body.size());
  ByteWriter w(frame);
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.u8(static_cast<std::uint8_t>(msg.kind()));
  w.u16(msg.sender);
  w.raw(body);
  return frame;
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  if (header.size() != kFrameHeaderBytes) throw DecodeError("frame header must be 7 bytes");
  ByteReader r(header);
  FrameHeader h;
  h.payload_length = r.u32();
  auto kind = r.u8();
  if (kind < 1 || kind > 6) throw DecodeError("unknown message kind " + std::to_string(kind));
  h.kind = static_cast<MessageKind>(kind);
  h.sender = r.u16();
  if (h.payload_length > kMaxPayloadBytes) throw DecodeError("payload too large");
  return h;
}

WireMessage decode_payload(const FrameHeader& header, std::span<const std::uint8_t> payload) {
  if (payload.size() != header.payload_length) throw DecodeError("payload length mismatch");
  ByteReader r(payload);
  WireMessage msg;
  msg.sender = header.sender;
  switch (header.kind) {
    case MessageKind::hello: {
      Hello m;
      m.experiment_id = r.u32();
      m.genesis_hash = read_hash(r);
      m.head_hash = read_hash(r);
      m.head_height = r.u64();
      m.node_id = r.u16();
      msg.payload = m;
      break;
    }
    case MessageKind::new_block:
      msg.payload = NewBlock{decode_block(r.raw(kBlockBytes))};
      break;
    case MessageKind::get_block:
      msg.payload = GetBlock{read_hash(r)};
      break;
    case MessageKind::block_response: {
      BlockResponse m;
      auto flag = r.u8();
      if (flag > 1) throw DecodeError("bad block-response flag");
      if (flag == 1) m.block = decode_block(r.raw(kBlockBytes));
      msg.payload = m;
      break;
    }
    case MessageKind::get_head:
      msg.payload = GetHead{};
      break;
    case MessageKind::head_response: {
      HeadResponse m;
      m.head_hash = read_hash(r);
      m.head_height = r.u64();
      msg.payload = m;
      break;
    }
  }
  r.expect_end();
  return msg;
}

WireMessage decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderBytes) throw DecodeError("truncated frame");
  auto header = decode_frame_header(frame.first(kFrameHeaderBytes));
  return decode_payload(header, frame.subspan(kFrameHeaderBytes));
}

}  // namespace powlab::p2p
