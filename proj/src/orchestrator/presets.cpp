#include "powlab/orchestrator/presets.hpp"

#include <algorithm>
#include <stdexcept>

namespace powlab::orch {

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fully-connected", "ring", "star", "two-islands", "eclipse",
                                                 "majority-51"};
  return names;
}

const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
      "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000", "#aaffc3", "#808000", "#ffd8b1", "#000075", "#808080"};
  return colors;
}

std::uint32_t majority_workers(std::uint64_t others_workers) {
  // w / (w + o) >= 51/100  <=>  49 w >= 51 o
  return static_cast<std::uint32_t>((51 * others_workers + 48) / 49);
}

namespace {

void connect(p2p::TopologyConfig& t, NodeId a, NodeId b) {
  t.adjacency[a].push_back(b);
  t.adjacency[b].push_back(a);
}

void full_mesh(p2p::TopologyConfig& t, const std::vector<NodeId>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) connect(t, ids[i], ids[j]);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

ExperimentSpec scenario_preset(std::string_view name, std::vector<NodeId> ids, const PresetParams& base) {
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "duplicate node ids");
  require(std::find(preset_names().begin(), preset_names().end(), name) != preset_names().end(),
          "unknown preset '" + std::string(name) + "'");
  bool needs_three = name == "ring" || name == "star" || name == "eclipse";
  require(ids.size() >= (needs_three ? 3u : 2u),
          "preset '" + std::string(name) + "' needs at least " + (needs_three ? "3" : "2") + " nodes");
  require(ids.size() <= palette().size(), "at most " + std::to_string(palette().size()) + " nodes");

  ExperimentSpec s;
  s.experiment_id = base.experiment_id;
  s.duration_s = base.duration_s;
  s.repetitions = base.repetitions;
  s.difficulty = base.difficulty;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s.nodes[ids[i]] = NodeParams{base.worker_count, base.attempts_per_sec_per_worker, base.outbound_delay_ms,
                                 palette()[i]};
    s.topology.adjacency[ids[i]];  // every node listed, even when isolated
  }
  auto& t = s.topology;

  if (name == "fully-connected") {
    full_mesh(t, ids);
  } else if (name == "ring") {
    for (std::size_t i = 0; i < ids.size(); ++i) connect(t, ids[i], ids[(i + 1) % ids.size()]);
  } else if (name == "star") {
    for (std::size_t i = 1; i < ids.size(); ++i) connect(t, ids[0], ids[i]);
  } else if (name == "two-islands") {
    auto mid = ids.begin() + static_cast<std::ptrdiff_t>((ids.size() + 1) / 2);
    full_mesh(t, {ids.begin(), mid});
    full_mesh(t, {mid, ids.end()});
  } else if (name == "eclipse") {
    NodeId victim = base.victim.value_or(ids.back());
    require(s.nodes.contains(victim), "victim " + std::to_string(victim) + " not among the nodes");
    std::vector<NodeId> honest;
    for (NodeId id : ids) {
      if (id != victim && id != base.attacker) honest.push_back(id);
    }
    if (base.attacker) {
      require(s.nodes.contains(*base.attacker) && *base.attacker != victim,
              "attacker must be one of the nodes and differ from the victim");
      connect(t, victim, *base.attacker);
    }
    require(honest.size() >= 2, "eclipse needs at least two honest nodes");
    full_mesh(t, honest);
  } else if (name == "majority-51") {
    NodeId attacker = base.attacker.value_or(ids.front());
    require(s.nodes.contains(attacker), "attacker " + std::to_string(attacker) + " not among the nodes");
    require(base.worker_count >= 1, "majority-51 needs worker_count >= 1");
    s.nodes[attacker].worker_count =
        majority_workers(static_cast<std::uint64_t>(base.worker_count) * (ids.size() - 1));
    full_mesh(t, ids);
  }
  for (auto& [id, peers] : t.adjacency) std::sort(peers.begin(), peers.end());
  return s;
}

}  // namespace powlab::orch
