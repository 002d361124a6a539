#include "powlab/metrics/json_codec.hpp"

#include "powlab/util/bytes.hpp"

namespace powlab {

json block_to_json(const Block& block) {
  const auto& h = block.header;
  return json{{"hash", block.hash.hex()},
              {"parent_hash", h.parent_hash.hex()},
              {"height", h.height},
              {"miner_id", h.miner_id},
              {"difficulty", h.difficulty},
              {"timestamp_ms", h.timestamp_ms},
              {"nonce", h.nonce},
              {"experiment_id", h.experiment_id}};
}

BlockHash hash_from_json(const json& j) {
  if (!j.is_string()) throw DecodeError("hash must be a hex string");
  return BlockHash::from_hex(j.get<std::string>());
}

Block block_from_json(const json& j) {
  Block b;
  try {
    b.hash = hash_from_json(j.at("hash"));
    b.header.parent_hash = hash_from_json(j.at("parent_hash"));
    b.header.height = j.at("height").get<std::uint64_t>();
    b.header.miner_id = j.at("miner_id").get<NodeId>();
    b.header.difficulty = j.at("difficulty").get<std::uint64_t>();
    b.header.timestamp_ms = j.at("timestamp_ms").get<std::uint64_t>();
    b.header.nonce = j.at("nonce").get<std::uint64_t>();
    b.header.experiment_id = j.at("experiment_id").get<ExperimentId>();
  } catch (const json::exception& e) {
    throw DecodeError(std::string("bad block json: ") + e.what());
  }
  return b;
}

json summary_to_json(const BlockSummary& s) {
  return json{{"hash", s.hash.hex()}, {"height", s.height}, {"miner_id", s.miner_id}, {"timestamp_ms", s.timestamp_ms}};
}

json chain_view_to_json(const ChainView& view) {
  json window = json::array();
  for (const auto& e : view.window) {
    json side = json::array();
    for (const auto& s : e.side) side.push_back(summary_to_json(s));
    window.push_back(json{{"height", e.height}, {"canonical", summary_to_json(e.canonical)}, {"side", side}});
  }
  return json{{"head_height", view.head_height}, {"window", window}};
}

}  // namespace powlab
