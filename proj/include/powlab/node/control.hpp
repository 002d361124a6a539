#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "powlab/core/block.hpp"

namespace powlab::node {

using json = nlohmann::json;

enum class Phase { idle, configured, mining, stopped };

std::string_view to_string(Phase p);

/// A control request the node refuses; `status` is the HTTP status to report.
class ControlError : public std::runtime_error {
 public:
  ControlError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// One node's share of an experiment spec, pushed by the orchestrator.
struct SpecSlice {
  ExperimentId experiment_id = 0;  // base id of the experiment
  ExperimentId run_id = 0;         // base id + repetition index; seeds genesis
  NodeId node_id = 0;
  std::string color = "#808080";
  std::uint64_t difficulty = 1;
  std::uint32_t worker_count = 1;
  std::uint64_t attempts_per_sec_per_worker = 5000;
  std::uint64_t outbound_delay_ms = 0;
  std::map<NodeId, std::string> peers;  // peer id -> p2p address

  json to_json() const;
  static SpecSlice from_json(const json& j);  // throws ControlError(400)

  friend bool operator==(const SpecSlice&, const SpecSlice&) = default;
};

struct NodeStatus {
  Phase phase = Phase::idle;
  NodeId node_id = 0;
  std::string color;
  BlockHash head_hash;
  std::uint64_t head_height = 0;
  std::size_t peer_count = 0;
  std::uint64_t blocks_mined = 0;
  ExperimentId experiment_id = 0;
  ExperimentId run_id = 0;
  bool run_finalized = false;
  bool logging_degraded = false;

  json to_json() const;
  static NodeStatus from_json(const json& j);
};

}  // namespace powlab::node
