#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "powlab/orchestrator/spec.hpp"

namespace powlab::orch {

struct PresetParams {
  ExperimentId experiment_id = 1;
  std::uint32_t duration_s = 60;
  std::uint32_t repetitions = 1;
  std::uint64_t difficulty = 10000;
  std::uint32_t worker_count = 1;
  std::uint64_t attempts_per_sec_per_worker = 5000;
  std::uint64_t outbound_delay_ms = 0;
  std::optional<NodeId> victim;    // eclipse; default highest id
  std::optional<NodeId> attacker;  // eclipse: victim's only peer; majority-51: the majority miner (default lowest id)
};

const std::vector<std::string>& preset_names();

/// Distinct display colours, assigned in ascending id order.
const std::vector<std::string>& palette();

/// Smallest worker count w with w / (w + others) >= 0.51, where every other
/// node runs `others_workers` in total at the same per-worker rate.
std::uint32_t majority_workers(std::uint64_t others_workers);

/// Throws std::invalid_argument on unknown names, too few nodes, or a
/// victim/attacker outside `node_ids`.
ExperimentSpec scenario_preset(std::string_view name, std::vector<NodeId> node_ids, const PresetParams& base);

}  // namespace powlab::orch
