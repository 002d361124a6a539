#include "powlab/node/control.hpp"

namespace powlab::node {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::configured: return "configured";
    case Phase::mining: return "mining";
    case Phase::stopped: return "stopped";
  }
  return "?";
}

namespace {

Phase phase_from(const std::string& s) {
  for (auto p : {Phase::idle, Phase::configured, Phase::mining, Phase::stopped}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown phase " + s);
}

}  // namespace

json SpecSlice::to_json() const {
  json peer_list = json::array();
  for (const auto& [id, addr] : peers) peer_list.push_back({{"node_id", id}, {"p2p_address", addr}});
  return {{"experiment_id", experiment_id},
          {"run_id", run_id},
          {"node_id", node_id},
          {"color", color},
          {"difficulty", difficulty},
          {"worker_count", worker_count},
          {"attempts_per_sec_per_worker", attempts_per_sec_per_worker},
          {"outbound_delay_ms", outbound_delay_ms},
          {"peers", peer_list}};
}

SpecSlice SpecSlice::from_json(const json& j) {
  try {
    SpecSlice s;
    s.experiment_id = j.at("experiment_id").get<ExperimentId>();
    s.run_id = j.value("run_id", s.experiment_id);
    s.node_id = j.at("node_id").get<NodeId>();
    s.color = j.value("color", s.color);
    s.difficulty = j.at("difficulty").get<std::uint64_t>();
    s.worker_count = j.value("worker_count", s.worker_count);
    s.attempts_per_sec_per_worker = j.value("attempts_per_sec_per_worker", s.attempts_per_sec_per_worker);
    s.outbound_delay_ms = j.value("outbound_delay_ms", s.outbound_delay_ms);
    for (const auto& p : j.value("peers", json::array())) {
      s.peers[p.at("node_id").get<NodeId>()] = p.at("p2p_address").get<std::string>();
    }
    if (s.difficulty == 0) throw ControlError(400, "difficulty must be >= 1");
    if (s.attempts_per_sec_per_worker == 0) throw ControlError(400, "attempts_per_sec_per_worker must be >= 1");
    if (s.peers.contains(s.node_id)) throw ControlError(400, "node lists itself as a peer");
    return s;
  } catch (const json::exception& e) {
    throw ControlError(400, std::string("bad spec slice: ") + e.what());
  }
}

json NodeStatus::to_json() const {
  return {{"phase", to_string(phase)},
          {"node_id", node_id},
          {"color", color},
          {"head_hash", head_hash.hex()},
          {"head_height", head_height},
          {"peer_count", peer_count},
          {"blocks_mined", blocks_mined},
          {"experiment_id", experiment_id},
          {"run_id", run_id},
          {"run_finalized", run_finalized},
          {"logging_degraded", logging_degraded}};
}

NodeStatus NodeStatus::from_json(const json& j) {
  NodeStatus s;
  s.phase = phase_from(j.at("phase").get<std::string>());
  s.node_id = j.at("node_id").get<NodeId>();
  s.color = j.value("color", "");
  s.head_hash = BlockHash::from_hex(j.at("head_hash").get<std::string>());
  s.head_height = j.at("head_height").get<std::uint64_t>();
  s.peer_count = j.at("peer_count").get<std::size_t>();
  s.blocks_mined = j.at("blocks_mined").get<std::uint64_t>();
  s.experiment_id = j.at("experiment_id").get<ExperimentId>();
  s.run_id = j.value("run_id", s.experiment_id);
  s.run_finalized = j.value("run_finalized", false);
  s.logging_degraded = j.value("logging_degraded", false);
  return s;
}

}  // namespace powlab::node
