#include "powlab/orchestrator/registry.hpp"

#include <cstdio>
#include <stdexcept>

#include "powlab/p2p/transport.hpp"

namespace powlab::orch {

Announcement Announcement::from_json(const json& j) {
  try {
    Announcement a;
    a.node_id = j.at("node_id").get<NodeId>();
    a.p2p_address = j.at("p2p_address").get<std::string>();
    a.rpc_address = j.at("rpc_address").get<std::string>();
    p2p::Endpoint::parse(a.p2p_address);
    p2p::Endpoint::parse(a.rpc_address);
    return a;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad announcement: ") + e.what());
  }
}

json RegisteredNode::to_json() const {
  return {{"node_id", identity.node_id},
          {"p2p_address", identity.p2p_address},
          {"rpc_address", identity.rpc_address},
          {"last_seen_ms", last_seen_ms},
          {"reachable", reachable}};
}

RegisteredNode Registry::view(const RegisteredNode& n, std::int64_t now_ms) const {
  RegisteredNode out = n;
  out.reachable = now_ms - n.last_seen_ms <= kUnreachableMs;
  return out;
}

Registry::Result Registry::announce(const Announcement& a, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(a.node_id);
  if (it != nodes_.end()) {
    const auto& old = it->second.identity;
    bool same = old.p2p_address == a.p2p_address && old.rpc_address == a.rpc_address;
    if (!same && view(it->second, now_ms).reachable) {
      std::fprintf(stderr, "orchestrator: identity conflict for node %u: %s already registered, refused %s\n",
                   a.node_id, old.rpc_address.c_str(), a.rpc_address.c_str());
      return Result::conflict;
    }
  }
  nodes_[a.node_id] = RegisteredNode{a, now_ms, true};
  return Result::ok;
}

Registry::Result Registry::heartbeat(const Announcement& a, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(a.node_id);
  if (it == nodes_.end()) return Result::unknown;
  const auto& old = it->second.identity;
  if (old.p2p_address != a.p2p_address || old.rpc_address != a.rpc_address) return Result::conflict;
  it->second.last_seen_ms = now_ms;
  return Result::ok;
}

std::vector<RegisteredNode> Registry::list(std::int64_t now_ms) const {
  std::lock_guard lock(mu_);
  std::vector<RegisteredNode> out;
  for (const auto& [id, n] : nodes_) out.push_back(view(n, now_ms));
  return out;
}

std::optional<RegisteredNode> Registry::get(NodeId id, std::int64_t now_ms) const {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return std::nullopt;
  return view(it->second, now_ms);
}

std::map<NodeId, NodeAvailability> Registry::availability(std::int64_t now_ms) const {
  std::map<NodeId, NodeAvailability> out;
  for (const auto& n : list(now_ms)) out[n.identity.node_id] = {true, n.reachable};
  return out;
}

}  // namespace powlab::orch
