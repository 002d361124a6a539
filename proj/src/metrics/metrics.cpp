#include "powlab/metrics/metrics.hpp"

#include <algorithm>
#include <vector>

namespace powlab {

double RunMetrics::contribution_pct(NodeId node) const {
  auto it = contribution_tenths.find(node);
  return it == contribution_tenths.end() ? 0.0 : it->second / 10.0;
}

json RunMetrics::to_json() const {
  json contributions = json::object();
  for (const auto& [node, tenths] : contribution_tenths) contributions[std::to_string(node)] = tenths / 10.0;
  return json{{"total_canonical", total_canonical},
              {"contributions", contributions},
              {"leader", leader ? json(*leader) : json(nullptr)},
              {"leader_pct", leader_pct()},
              {"own_pct", own_pct()},
              {"uncle_count", uncle_count},
              {"uncle_rate", uncle_rate},
              {"head_height", head_height}};
}

namespace {

int to_tenths(double pct) { return static_cast<int>(pct * 10.0 + (pct >= 0 ? 0.5 : -0.5)); }

}  // namespace

RunMetrics RunMetrics::from_json(const json& j) {
  RunMetrics m;
  m.total_canonical = j.at("total_canonical").get<std::uint64_t>();
  for (const auto& [node, pct] : j.at("contributions").items()) {
    m.contribution_tenths[static_cast<NodeId>(std::stoul(node))] = to_tenths(pct.get<double>());
  }
  if (!j.at("leader").is_null()) m.leader = j.at("leader").get<NodeId>();
  m.leader_tenths = to_tenths(j.at("leader_pct").get<double>());
  m.own_tenths = to_tenths(j.at("own_pct").get<double>());
  m.uncle_count = j.at("uncle_count").get<std::uint64_t>();
  m.uncle_rate = j.at("uncle_rate").get<double>();
  m.head_height = j.at("head_height").get<std::uint64_t>();
  return m;
}

RunMetrics metrics_from_counts(const std::map<NodeId, std::uint64_t>& canonical_by_miner, std::uint64_t uncle_count,
                               std::uint64_t head_height, NodeId self_id) {
  RunMetrics m;
  m.uncle_count = uncle_count;
  m.head_height = head_height;
  for (const auto& [node, count] : canonical_by_miner) m.total_canonical += count;
  if (m.total_canonical + uncle_count > 0) {
    m.uncle_rate = static_cast<double>(uncle_count) / static_cast<double>(m.total_canonical + uncle_count);
  }
  if (m.total_canonical == 0) return m;

  // Largest-remainder rounding to tenths; remainders tie-break by larger
  // count, then lower id, which keeps the share order consistent with counts.
  struct Share {
    NodeId node;
    std::uint64_t count;
    std::uint64_t floor_tenths;
    std::uint64_t remainder;
  };
  std::vector<Share> shares;
  std::uint64_t assigned = 0;
  for (const auto& [node, count] : canonical_by_miner) {
    if (count == 0) continue;
    auto scaled = count * 1000;
    shares.push_back({node, count, scaled / m.total_canonical, scaled % m.total_canonical});
    assigned += scaled / m.total_canonical;
  }
  auto order = shares;
  std::sort(order.begin(), order.end(), [](const Share& a, const Share& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    if (a.count != b.count) return a.count > b.count;
    return a.node < b.node;
  });
  for (std::size_t i = 0; assigned < 1000 && i < order.size(); ++i, ++assigned) {
    for (auto& s : shares) {
      if (s.node == order[i].node) ++s.floor_tenths;
    }
  }

  for (const auto& s : shares) {
    m.contribution_tenths[s.node] = static_cast<int>(s.floor_tenths);
    if (!m.leader || s.count > canonical_by_miner.at(*m.leader)) m.leader = s.node;
  }
  m.leader_tenths = m.contribution_tenths.at(*m.leader);
  auto own = m.contribution_tenths.find(self_id);
  m.own_tenths = own == m.contribution_tenths.end() ? 0 : own->second;
  return m;
}

RunMetrics compute_node_metrics(const BlockTree& tree, NodeId self_id) {
  std::map<NodeId, std::uint64_t> counts;
  auto chain = tree.canonical_chain();
  for (std::size_t i = 1; i < chain.size(); ++i) ++counts[tree.find(chain[i])->header.miner_id];
  return metrics_from_counts(counts, tree.uncle_set().size(), chain.size() - 1, self_id);
}

}  // namespace powlab
