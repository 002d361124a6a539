#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "powlab/core/block.hpp"
#include "powlab/p2p/topology.hpp"

namespace powlab::orch {

using json = nlohmann::json;

struct NodeParams {
  std::uint32_t worker_count = 1;
  std::uint64_t attempts_per_sec_per_worker = 5000;
  std::uint64_t outbound_delay_ms = 0;
  std::string color;

  friend bool operator==(const NodeParams&, const NodeParams&) = default;
};

struct ExperimentSpec {
  ExperimentId experiment_id = 0;
  std::uint32_t duration_s = 60;
  std::uint32_t repetitions = 1;
  std::uint64_t difficulty = 1;
  std::map<NodeId, NodeParams> nodes;
  p2p::TopologyConfig topology;
  std::optional<NodeId> reference_node;  // aggregate view; default lowest-id miner

  std::set<NodeId> node_ids() const;
  ExperimentId run_id(std::uint32_t repetition) const { return experiment_id + repetition; }
  std::uint64_t hashrate(NodeId id) const;

  json to_json() const;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

struct Violation {
  std::string field;
  std::string reason;

  json to_json() const { return {{"field", field}, {"reason", reason}}; }
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ParsedSpec {
  std::optional<ExperimentSpec> spec;
  std::vector<Violation> violations;  // non-empty iff spec is empty
};

/// Field-by-field parse; reports every missing or mistyped field.
ParsedSpec parse_spec(const json& j);

/// What validation needs to know about registered nodes.
struct NodeAvailability {
  bool registered = false;
  bool reachable = false;
};

/// Checks the spec's own invariants plus registration, reachability and
/// run-id reuse. `used_run_ids` holds ids of already persisted runs.
std::vector<Violation> validate_spec(const ExperimentSpec& spec, const std::map<NodeId, NodeAvailability>& nodes,
                                     const std::set<ExperimentId>& used_run_ids);

/// Invariants that do not depend on the registry.
std::vector<Violation> check_spec(const ExperimentSpec& spec);

bool is_hex_color(const std::string& s);

}  // namespace powlab::orch
