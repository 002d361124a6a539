#include "powlab/node/rpc.hpp"

#include "powlab/metrics/json_codec.hpp"
#include "powlab/metrics/metrics.hpp"

namespace powlab::node {

namespace {

struct RpcFailure {
  int code;
  std::string message;
};

json error_response(const json& id, int code, const std::string& message) {
  return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

// Positional or named single parameter.
const json* param(const json& params, const char* name) {
  if (params.is_array() && !params.empty()) return &params[0];
  if (params.is_object() && params.contains(name)) return &params[name];
  return nullptr;
}

std::uint64_t uint_param(const json& params, const char* name) {
  const json* p = param(params, name);
  if (!p) throw RpcFailure{rpc_error::invalid_params, std::string("missing ") + name};
  if (p->is_number_unsigned()) return p->get<std::uint64_t>();
  if (p->is_number_integer() && p->get<std::int64_t>() >= 0) return p->get<std::uint64_t>();
  throw RpcFailure{rpc_error::invalid_params, std::string(name) + " must be a non-negative integer"};
}

json dispatch(const std::string& method, const json& params, const NodeSnapshot& snap) {
  const BlockTree& tree = *snap.tree;
  const NodeStatus& st = snap.status;

  if (method == "powlab_getNodeInfo") {
    return {{"node_id", st.node_id},
            {"color", st.color},
            {"phase", to_string(st.phase)},
            {"peer_count", st.peer_count},
            {"experiment_id", st.experiment_id},
            {"run_id", st.run_id},
            {"blocks_mined", st.blocks_mined},
            {"logging_degraded", st.logging_degraded},
            {"api_version", kApiVersion}};
  }
  if (method == "powlab_getHead") {
    return {{"hash", tree.head().hex()}, {"height", tree.head_block().header.height}};
  }
  if (method == "powlab_getBlockByHash") {
    const json* p = param(params, "hash");
    if (!p || !p->is_string()) throw RpcFailure{rpc_error::invalid_params, "hash must be a hex string"};
    BlockHash hash;
    try {
      hash = BlockHash::from_hex(p->get<std::string>());
    } catch (const std::exception& e) {
      throw RpcFailure{rpc_error::invalid_params, e.what()};
    }
    const Block* b = tree.find(hash);
    return b ? block_to_json(*b) : json(nullptr);
  }
  if (method == "powlab_getBlockByNumber") {
    const Block* b = tree.canonical_at(uint_param(params, "height"));
    return b ? block_to_json(*b) : json(nullptr);
  }
  if (method == "powlab_getChainView") {
    auto depth = uint_param(params, "depth");
    if (depth == 0) throw RpcFailure{rpc_error::invalid_params, "depth must be >= 1"};
    return chain_view_to_json(tree.chain_view(depth));
  }
  if (method == "powlab_getMetrics") {
    return compute_node_metrics(tree, st.node_id).to_json();
  }
  throw RpcFailure{rpc_error::method_not_found, "method not found: " + method};
}

}  // namespace

json handle_rpc(const json& request, const NodeSnapshot& snap) {
  if (!request.is_object()) return error_response(nullptr, rpc_error::invalid_request, "request must be an object");
  json id = request.contains("id") ? request["id"] : json();
  bool notification = !request.contains("id");
  if (request.value("jsonrpc", "") != "2.0" || !request.contains("method") || !request["method"].is_string() ||
      (!id.is_null() && !id.is_string() && !id.is_number())) {
    return error_response(id, rpc_error::invalid_request, "invalid request");
  }
  json params = request.value("params", json::array());
  if (!params.is_array() && !params.is_object()) {
    return error_response(id, rpc_error::invalid_params, "params must be an array or object");
  }
  try {
    json result = dispatch(request["method"].get<std::string>(), params, snap);
    if (notification) return nullptr;
    return {{"jsonrpc", "2.0"}, {"id", id}, {"result", result}};
  } catch (const RpcFailure& f) {
    if (notification) return nullptr;
    return error_response(id, f.code, f.message);
  }
}

std::string handle_rpc_body(const std::string& body, const NodeSnapshot& snap) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(nullptr, rpc_error::parse, "parse error").dump();
  }
  if (request.is_array()) {
    if (request.empty()) return error_response(nullptr, rpc_error::invalid_request, "empty batch").dump();
    json out = json::array();
    for (const auto& r : request) {
      json resp = handle_rpc(r, snap);
      if (!resp.is_null()) out.push_back(std::move(resp));
    }
    return out.empty() ? std::string() : out.dump();
  }
  json resp = handle_rpc(request, snap);
  return resp.is_null() ? std::string() : resp.dump();
}

}  // namespace powlab::node
