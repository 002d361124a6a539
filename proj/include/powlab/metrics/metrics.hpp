#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "powlab/core/block_tree.hpp"
#include "powlab/metrics/json_codec.hpp"

namespace powlab {

/// Per-node view of a run as shown on the info panel. Percentages are held
/// in tenths of a point so that live and replayed values compare exactly.
struct RunMetrics {
  std::uint64_t total_canonical = 0;  // excludes genesis
  std::map<NodeId, int> contribution_tenths;
  std::optional<NodeId> leader;
  int leader_tenths = 0;
  int own_tenths = 0;
  std::uint64_t uncle_count = 0;
  double uncle_rate = 0.0;
  std::uint64_t head_height = 0;

  double contribution_pct(NodeId node) const;
  double leader_pct() const { return leader_tenths / 10.0; }
  double own_pct() const { return own_tenths / 10.0; }

  json to_json() const;
  static RunMetrics from_json(const json& j);

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

/// Builds metrics from per-miner canonical block counts. Shares are rounded
/// to one decimal with largest remainders so they sum to exactly 100.0;
/// the leader is the largest count, lowest id on ties.
RunMetrics metrics_from_counts(const std::map<NodeId, std::uint64_t>& canonical_by_miner,
                               std::uint64_t uncle_count, std::uint64_t head_height, NodeId self_id);

RunMetrics compute_node_metrics(const BlockTree& tree, NodeId self_id);

}  // namespace powlab
