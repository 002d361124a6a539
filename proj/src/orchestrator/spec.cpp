#include "powlab/orchestrator/spec.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace powlab::orch {

std::set<NodeId> ExperimentSpec::node_ids() const {
  std::set<NodeId> out;
  for (const auto& [id, p] : nodes) out.insert(id);
  return out;
}

std::uint64_t ExperimentSpec::hashrate(NodeId id) const {
  const auto& p = nodes.at(id);
  return p.worker_count * p.attempts_per_sec_per_worker;
}

json ExperimentSpec::to_json() const {
  json n = json::object();
  for (const auto& [id, p] : nodes) {
    n[std::to_string(id)] = {{"worker_count", p.worker_count},
                             {"attempts_per_sec_per_worker", p.attempts_per_sec_per_worker},
                             {"outbound_delay_ms", p.outbound_delay_ms},
                             {"color", p.color}};
  }
  json adj = json::object();
  for (const auto& [id, peers] : topology.adjacency) adj[std::to_string(id)] = peers;
  json j = {{"experiment_id", experiment_id},
            {"duration_s", duration_s},
            {"repetitions", repetitions},
            {"difficulty", difficulty},
            {"nodes", n},
            {"topology", {{"adjacency", adj}}}};
  if (reference_node) j["reference_node"] = *reference_node;
  return j;
}

bool is_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') return false;
  return std::all_of(s.begin() + 1, s.end(), [](unsigned char c) { return std::isxdigit(c); });
}

namespace {

class Reader {
 public:
  explicit Reader(std::vector<Violation>& out) : out_(out) {}

  template <class T>
  bool get(const json& obj, const std::string& key, const std::string& field, T& dst, bool required = true) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) out_.push_back({field, "missing"});
      return false;
    }
    const json& v = obj.at(key);
    if constexpr (std::is_integral_v<T>) {
      bool ok = v.is_number_unsigned() ||
                (v.is_number_integer() && v.template get<std::int64_t>() >= 0);
      if (!ok || v.template get<std::uint64_t>() > std::numeric_limits<T>::max()) {
        out_.push_back({field, "must be a non-negative integer"});
        return false;
      }
      dst = v.template get<T>();
    } else {
      if (!v.is_string()) {
        out_.push_back({field, "must be a string"});
        return false;
      }
      dst = v.template get<T>();
    }
    return true;
  }

  std::optional<NodeId> node_key(const std::string& key, const std::string& field) {
    try {
      std::size_t used = 0;
      unsigned long v = std::stoul(key, &used);
      if (used == key.size() && v <= std::numeric_limits<NodeId>::max()) return static_cast<NodeId>(v);
    } catch (const std::exception&) {
    }
    out_.push_back({field, "node id must be an integer in [0, 65535]"});
    return std::nullopt;
  }

 private:
  std::vector<Violation>& out_;
};

}  // namespace

ParsedSpec parse_spec(const json& j) {
  ParsedSpec out;
  auto& v = out.violations;
  if (!j.is_object()) {
    v.push_back({"", "spec must be a JSON object"});
    return out;
  }
  Reader r(v);
  ExperimentSpec s;
  r.get(j, "experiment_id", "experiment_id", s.experiment_id);
  r.get(j, "duration_s", "duration_s", s.duration_s);
  r.get(j, "repetitions", "repetitions", s.repetitions);
  r.get(j, "difficulty", "difficulty", s.difficulty);
  NodeId ref = 0;
  if (r.get(j, "reference_node", "reference_node", ref, false)) s.reference_node = ref;

  if (!j.contains("nodes") || !j["nodes"].is_object()) {
    v.push_back({"nodes", j.contains("nodes") ? "must be an object keyed by node id" : "missing"});
  } else {
    for (const auto& [key, params] : j["nodes"].items()) {
      std::string field = "nodes." + key;
      auto id = r.node_key(key, field);
      if (!id) continue;
      NodeParams p;
      if (!params.is_object()) {
        v.push_back({field, "must be an object"});
        continue;
      }
      r.get(params, "worker_count", field + ".worker_count", p.worker_count);
      r.get(params, "attempts_per_sec_per_worker", field + ".attempts_per_sec_per_worker",
            p.attempts_per_sec_per_worker);
      r.get(params, "outbound_delay_ms", field + ".outbound_delay_ms", p.outbound_delay_ms, false);
      r.get(params, "color", field + ".color", p.color);
      s.nodes[*id] = p;
    }
  }

  const json* adj = nullptr;
  if (j.contains("topology") && j["topology"].is_object() && j["topology"].contains("adjacency")) {
    adj = &j["topology"]["adjacency"];
  }
  if (!adj || !adj->is_object()) {
    v.push_back({"topology.adjacency", adj ? "must be an object keyed by node id" : "missing"});
  } else {
    for (const auto& [key, peers] : adj->items()) {
      std::string field = "topology.adjacency." + key;
      auto id = r.node_key(key, field);
      if (!id) continue;
      if (!peers.is_array()) {
        v.push_back({field, "must be a list of node ids"});
        continue;
      }
      auto& list = s.topology.adjacency[*id];
      for (const auto& p : peers) {
        if (!p.is_number_integer() || p.get<std::int64_t>() < 0 || p.get<std::int64_t>() > 65535) {
          v.push_back({field, "peer ids must be integers in [0, 65535]"});
          continue;
        }
        list.push_back(p.get<NodeId>());
      }
    }
  }

  if (v.empty()) out.spec = std::move(s);
  return out;
}

std::vector<Violation> check_spec(const ExperimentSpec& s) {
  std::vector<Violation> v;
  if (s.duration_s < 5) v.push_back({"duration_s", "must be >= 5"});
  if (s.repetitions < 1) v.push_back({"repetitions", "must be >= 1"});
  if (s.difficulty < 1) v.push_back({"difficulty", "must be >= 1"});
  if (static_cast<std::uint64_t>(s.experiment_id) + s.repetitions - 1 > std::numeric_limits<ExperimentId>::max()) {
    v.push_back({"repetitions", "run ids overflow the 32-bit experiment id"});
  }
  if (s.nodes.empty()) v.push_back({"nodes", "no nodes"});

  bool any_miner = false;
  std::map<std::string, NodeId> colors;
  for (const auto& [id, p] : s.nodes) {
    std::string field = "nodes." + std::to_string(id);
    if (p.worker_count > 0) any_miner = true;
    if (p.attempts_per_sec_per_worker < 1) v.push_back({field + ".attempts_per_sec_per_worker", "must be >= 1"});
    if (!is_hex_color(p.color)) {
      v.push_back({field + ".color", "must be #RRGGBB"});
      continue;
    }
    std::string key = p.color;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    auto [it, fresh] = colors.emplace(key, id);
    if (!fresh) v.push_back({field + ".color", "duplicate color (also node " + std::to_string(it->second) + ")"});
  }
  if (!s.nodes.empty() && !any_miner) v.push_back({"nodes", "no miners"});

  for (const auto& [id, peers] : s.topology.adjacency) {
    std::string field = "topology.adjacency." + std::to_string(id);
    if (!s.nodes.contains(id)) v.push_back({field, "unknown node " + std::to_string(id)});
    for (NodeId p : peers) {
      if (p == id) v.push_back({field, "self-loop"});
      else if (!s.nodes.contains(p)) v.push_back({field, "unknown node " + std::to_string(p)});
    }
  }
  if (s.reference_node && !s.nodes.contains(*s.reference_node)) {
    v.push_back({"reference_node", "unknown node " + std::to_string(*s.reference_node)});
  }
  return v;
}

std::vector<Violation> validate_spec(const ExperimentSpec& spec, const std::map<NodeId, NodeAvailability>& nodes,
                                     const std::set<ExperimentId>& used_run_ids) {
  auto v = check_spec(spec);
  auto ids = spec.node_ids();
  auto topo_ids = spec.topology.node_ids();
  ids.insert(topo_ids.begin(), topo_ids.end());
  for (NodeId id : ids) {
    auto it = nodes.find(id);
    std::string field = "nodes." + std::to_string(id);
    if (it == nodes.end() || !it->second.registered) {
      v.push_back({field, "unknown node (not registered)"});
    } else if (!it->second.reachable) {
      v.push_back({field, "unreachable"});
    }
  }
  for (std::uint32_t r = 0; r < spec.repetitions; ++r) {
    auto run = static_cast<std::uint64_t>(spec.experiment_id) + r;
    if (run <= std::numeric_limits<ExperimentId>::max() && used_run_ids.contains(static_cast<ExperimentId>(run))) {
      v.push_back({"experiment_id", "run id " + std::to_string(run) + " already recorded"});
    }
  }
  return v;
}

}  // namespace powlab::orch
