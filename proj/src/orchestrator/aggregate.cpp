#include "powlab/orchestrator/aggregate.hpp"

#include <algorithm>

namespace powlab::orch {

namespace {

json optional_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::int64_t> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::int64_t>();
}

bool heads_equal(const std::vector<const NodeReplay*>& nodes, std::int64_t ts) {
  const auto& first = nodes.front()->head_at(ts).head;
  return std::all_of(nodes.begin(), nodes.end(), [&](const NodeReplay* n) { return n->head_at(ts).head == first; });
}

}  // namespace

json Aggregate::to_json() const {
  json samples = json::array();
  for (const auto& s : agreement) samples.push_back({{"ts_ms", s.ts_ms}, {"fraction", s.fraction}});
  json per = json::object();
  for (const auto& [id, m] : per_node) per[std::to_string(id)] = m.to_json();
  return {{"reference_node", reference ? json(*reference) : json(nullptr)},
          {"metrics", metrics.to_json()},
          {"considered", considered},
          {"excluded", excluded},
          {"agreement", samples},
          {"mining_stopped_ts_ms", optional_json(mining_stopped_ts_ms)},
          {"convergence_time_ms", optional_json(convergence_time_ms)},
          {"converged", converged()},
          {"per_node", per}};
}

Aggregate Aggregate::from_json(const json& j) {
  Aggregate a;
  if (!j.at("reference_node").is_null()) a.reference = j.at("reference_node").get<NodeId>();
  a.metrics = RunMetrics::from_json(j.at("metrics"));
  a.considered = j.at("considered").get<std::vector<NodeId>>();
  a.excluded = j.at("excluded").get<std::vector<NodeId>>();
  for (const auto& s : j.at("agreement")) a.agreement.push_back({s.at("ts_ms"), s.at("fraction")});
  a.mining_stopped_ts_ms = optional_from(j.at("mining_stopped_ts_ms"));
  a.convergence_time_ms = optional_from(j.at("convergence_time_ms"));
  for (const auto& [k, m] : j.at("per_node").items()) {
    a.per_node[static_cast<NodeId>(std::stoul(k))] = RunMetrics::from_json(m);
  }
  return a;
}

std::optional<NodeId> choose_reference(const ExperimentSpec& spec, const std::set<NodeId>& collected) {
  if (spec.reference_node && collected.contains(*spec.reference_node)) return spec.reference_node;
  for (NodeId id : collected) {
    auto it = spec.nodes.find(id);
    if (it != spec.nodes.end() && it->second.worker_count > 0) return id;
  }
  if (!collected.empty()) return *collected.begin();
  return std::nullopt;
}

std::optional<std::int64_t> converged_at(const std::vector<const NodeReplay*>& nodes, std::int64_t from,
                                         std::int64_t until) {
  if (nodes.empty()) return std::nullopt;
  if (until < from) until = from;
  std::vector<std::int64_t> instants{from};
  for (const auto* n : nodes) {
    for (const auto& h : n->heads) {
      if (h.ts_ms > from && h.ts_ms <= until) instants.push_back(h.ts_ms);
    }
  }
  std::sort(instants.begin(), instants.end());
  instants.erase(std::unique(instants.begin(), instants.end()), instants.end());

  // Heads only change at these instants, so scanning back from the end finds
  // where the final agreement began.
  std::optional<std::int64_t> since;
  for (auto it = instants.rbegin(); it != instants.rend(); ++it) {
    if (!heads_equal(nodes, *it)) break;
    since = *it;
  }
  return since;
}

Aggregate aggregate_metrics(const std::map<NodeId, NodeReplay>& nodes, std::optional<NodeId> reference,
                            const p2p::TopologyConfig& topology) {
  Aggregate a;
  for (const auto& [id, n] : nodes) a.per_node[id] = n.metrics;
  if (!reference || !nodes.contains(*reference)) return a;
  a.reference = reference;
  const NodeReplay& ref = nodes.at(*reference);
  a.metrics = ref.metrics;

  std::set<NodeId> collected;
  for (const auto& [id, n] : nodes) collected.insert(id);
  std::set<NodeId> component{*reference};
  for (const auto& comp : topology.components(collected)) {
    if (comp.contains(*reference)) component = comp;
  }
  std::vector<const NodeReplay*> group;
  for (NodeId id : collected) {
    if (component.contains(id)) {
      a.considered.push_back(id);
      group.push_back(&nodes.at(id));
    } else {
      a.excluded.push_back(id);
    }
  }

  std::int64_t end = ref.last_ts_ms;
  for (const auto* n : group) end = std::min(end, n->last_ts_ms);
  for (std::int64_t t = 0; t <= end; t += kAgreementSampleMs) {
    auto ref_head = ref.head_at(t).head;
    auto agree = std::count_if(group.begin(), group.end(), [&](const NodeReplay* n) { return n->head_at(t).head == ref_head; });
    a.agreement.push_back({t, static_cast<double>(agree) / static_cast<double>(group.size())});
  }

  std::optional<std::int64_t> stopped;
  for (const auto* n : group) {
    if (!n->mining_stopped_ts_ms) {
      stopped.reset();
      break;
    }
    stopped = std::max(stopped.value_or(*n->mining_stopped_ts_ms), *n->mining_stopped_ts_ms);
  }
  a.mining_stopped_ts_ms = stopped;
  if (stopped) {
    if (auto at = converged_at(group, *stopped, end)) a.convergence_time_ms = *at - *stopped;
  }
  return a;
}

Aggregate aggregate_logs(const ExperimentSpec& spec, const std::map<NodeId, NodeLog>& logs) {
  std::map<NodeId, NodeReplay> replays;
  for (const auto& [id, log] : logs) {
    if (log.records.empty()) continue;
    replays[id] = replay_node(log);
  }
  std::set<NodeId> collected;
  for (const auto& [id, r] : replays) collected.insert(id);
  return aggregate_metrics(replays, choose_reference(spec, collected), spec.topology);
}

}  // namespace powlab::orch
