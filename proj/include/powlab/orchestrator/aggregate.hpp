#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "powlab/metrics/replay.hpp"
#include "powlab/orchestrator/spec.hpp"

namespace powlab::orch {

inline constexpr std::int64_t kAgreementSampleMs = 1000;

struct AgreementSample {
  std::int64_t ts_ms = 0;
  double fraction = 0.0;
  friend bool operator==(const AgreementSample&, const AgreementSample&) = default;
};

/// Cross-node view of one run, taken from a reference node's final chain.
/// Agreement and convergence only consider nodes in the reference's
/// topology component: an isolated node cannot be expected to agree.
struct Aggregate {
  std::optional<NodeId> reference;
  RunMetrics metrics;
  std::vector<NodeId> considered;
  std::vector<NodeId> excluded;  // collected but topologically cut off
  std::vector<AgreementSample> agreement;
  std::optional<std::int64_t> mining_stopped_ts_ms;
  std::optional<std::int64_t> convergence_time_ms;  // after mining stopped
  std::map<NodeId, RunMetrics> per_node;

  bool converged() const { return convergence_time_ms.has_value(); }

  json to_json() const;
  static Aggregate from_json(const json& j);
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

/// Lowest-id node with worker_count >= 1 among `collected`, or the spec's
/// explicit reference if that one was collected.
std::optional<NodeId> choose_reference(const ExperimentSpec& spec, const std::set<NodeId>& collected);

/// Pure function of the replayed logs, the reference and the topology.
Aggregate aggregate_metrics(const std::map<NodeId, NodeReplay>& nodes, std::optional<NodeId> reference,
                            const p2p::TopologyConfig& topology);

/// Convenience: replays every log, picks the reference, aggregates.
Aggregate aggregate_logs(const ExperimentSpec& spec, const std::map<NodeId, NodeLog>& logs);

/// First instant at or after `from` from which all heads stay equal until
/// `until`; nullopt if they still differ at `until`.
std::optional<std::int64_t> converged_at(const std::vector<const NodeReplay*>& nodes, std::int64_t from,
                                         std::int64_t until);

}  // namespace powlab::orch
