#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "powlab/core/block.hpp"
#include "powlab/orchestrator/spec.hpp"

namespace powlab::orch {

struct Announcement {
  NodeId node_id = 0;
  std::string p2p_address;
  std::string rpc_address;

  static Announcement from_json(const json& j);  // throws std::invalid_argument
};

struct RegisteredNode {
  Announcement identity;
  std::int64_t last_seen_ms = 0;
  bool reachable = true;

  json to_json() const;
};

/// Nodes announce themselves and then heartbeat. A node silent for longer
/// than kUnreachableMs is reported unreachable but kept.
class Registry {
 public:
  static constexpr std::int64_t kHeartbeatMs = 5000;
  static constexpr std::int64_t kUnreachableMs = 15000;

  enum class Result { ok, conflict, unknown };

  /// Same id from a different address is refused while the original is alive.
  Result announce(const Announcement& a, std::int64_t now_ms);
  /// Unknown ids get Result::unknown so the node re-registers.
  Result heartbeat(const Announcement& a, std::int64_t now_ms);

  std::vector<RegisteredNode> list(std::int64_t now_ms) const;
  std::optional<RegisteredNode> get(NodeId id, std::int64_t now_ms) const;
  std::map<NodeId, NodeAvailability> availability(std::int64_t now_ms) const;

 private:
  RegisteredNode view(const RegisteredNode& n, std::int64_t now_ms) const;

  mutable std::mutex mu_;
  std::map<NodeId, RegisteredNode> nodes_;
};

}  // namespace powlab::orch
