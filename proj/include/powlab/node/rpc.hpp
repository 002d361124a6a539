#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "powlab/core/block_tree.hpp"
#include "powlab/node/control.hpp"

namespace powlab::node {

inline constexpr int kApiVersion = 1;

/// State published by the event loop after each event. RPC handlers only
/// ever read one snapshot, so every answer reflects a single instant.
struct NodeSnapshot {
  NodeStatus status;
  std::shared_ptr<const BlockTree> tree;
};

namespace rpc_error {
inline constexpr int parse = -32700;
inline constexpr int invalid_request = -32600;
inline constexpr int method_not_found = -32601;
inline constexpr int invalid_params = -32602;
}  // namespace rpc_error

/// Answers one JSON-RPC 2.0 request object. Returns null for notifications.
json handle_rpc(const json& request, const NodeSnapshot& snap);

/// Full HTTP body handling: parse errors, batches, notifications.
std::string handle_rpc_body(const std::string& body, const NodeSnapshot& snap);

}  // namespace powlab::node
