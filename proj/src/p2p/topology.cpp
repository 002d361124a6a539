#include "powlab/p2p/topology.hpp"

#include <algorithm>
#include <functional>

namespace powlab::p2p {

std::set<std::pair<NodeId, NodeId>> TopologyConfig::links() const {
  std::set<std::pair<NodeId, NodeId>> out;
  for (const auto& [node, peers] : adjacency) {
    for (auto peer : peers) {
      if (peer == node) continue;
      out.emplace(std::min(node, peer), std::max(node, peer));
    }
  }
  return out;
}

std::vector<NodeId> TopologyConfig::peers_of(NodeId self) const {
  std::set<NodeId> peers;
  for (const auto& [a, b] : links()) {
    if (a == self) peers.insert(b);
    if (b == self) peers.insert(a);
  }
  return {peers.begin(), peers.end()};
}

std::set<NodeId> TopologyConfig::node_ids() const {
  std::set<NodeId> ids;
  for (const auto& [node, peers] : adjacency) {
    ids.insert(node);
    ids.insert(peers.begin(), peers.end());
  }
  return ids;
}

std::vector<std::string> TopologyConfig::problems(const std::set<NodeId>& known) const {
  std::vector<std::string> out;
  for (const auto& [node, peers] : adjacency) {
    if (!known.contains(node)) out.push_back("unknown node " + std::to_string(node));
    for (auto peer : peers) {
      if (peer == node) out.push_back("self-loop on node " + std::to_string(node));
      else if (!known.contains(peer)) out.push_back("unknown node " + std::to_string(peer));
    }
  }
  return out;
}

std::vector<std::set<NodeId>> TopologyConfig::components(const std::set<NodeId>& nodes) const {
  std::map<NodeId, NodeId> parent;
  for (auto n : nodes) parent[n] = n;
  std::function<NodeId(NodeId)> root = [&](NodeId n) {
    while (parent[n] != n) n = parent[n] = parent[parent[n]];
    return n;
  };
  for (const auto& [a, b] : links()) {
    if (!nodes.contains(a) || !nodes.contains(b)) continue;
    parent[root(a)] = root(b);
  }
  std::map<NodeId, std::set<NodeId>> groups;
  for (auto n : nodes) groups[root(n)].insert(n);
  std::vector<std::set<NodeId>> out;
  for (auto& [r, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return *x.begin() < *y.begin(); });
  return out;
}

LinkPlan LinkPlan::for_node(NodeId self, const TopologyConfig& topo) {
  LinkPlan plan;
  for (auto peer : topo.peers_of(self)) (peer > self ? plan.dial : plan.accept).push_back(peer);
  return plan;
}

}  // namespace powlab::p2p
