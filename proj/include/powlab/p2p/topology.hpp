#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "powlab/core/block.hpp"

namespace powlab::p2p {

/// Per-node peer lists as configured. Links are the symmetric closure:
/// listing a peer on either side connects both.
struct TopologyConfig {
  std::map<NodeId, std::vector<NodeId>> adjacency;

  /// Undirected links as (lower, higher) pairs, self-loops dropped.
  std::set<std::pair<NodeId, NodeId>> links() const;

  /// Sorted neighbours of `self` after symmetrization.
  std::vector<NodeId> peers_of(NodeId self) const;

  /// Every id mentioned either as a key or inside a peer list.
  std::set<NodeId> node_ids() const;

  /// Human-readable problems: self-loops and ids outside `known`.
  std::vector<std::string> problems(const std::set<NodeId>& known) const;

  /// Connected components over `nodes` (isolated nodes form their own).
  std::vector<std::set<NodeId>> components(const std::set<NodeId>& nodes) const;

  friend bool operator==(const TopologyConfig&, const TopologyConfig&) = default;
};

struct LatencyConfig {
  std::map<NodeId, std::uint64_t> outbound_delay_ms;

  std::uint64_t delay_for(NodeId node) const {
    auto it = outbound_delay_ms.find(node);
    return it == outbound_delay_ms.end() ? 0 : it->second;
  }
};

/// Which links this node dials and which it waits for. The lower id of each
/// pair initiates, so every undirected link has exactly one connection.
struct LinkPlan {
  std::vector<NodeId> dial;
  std::vector<NodeId> accept;

  static LinkPlan for_node(NodeId self, const TopologyConfig& topo);
};

}  // namespace powlab::p2p
