#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "powlab/node/control.hpp"
#include "powlab/node/rpc.hpp"
#include "powlab/p2p/transport.hpp"

namespace powlab::node {

struct NodeOptions {
  NodeId node_id = 0;
  p2p::Endpoint p2p_listen{"", 0};
  p2p::Endpoint rpc_listen{"", 0};
  std::string advertise_host = "127.0.0.1";
  std::filesystem::path data_dir = "data";
  std::optional<std::string> orchestrator_url;
  std::uint64_t heartbeat_ms = 5000;
};

/// One full node: block tree, miner and p2p links driven by a single event
/// loop, plus the HTTP surface (JSON-RPC on POST /, control under /control).
class Node {
 public:
  /// Binds both listeners; throws std::system_error when a port is taken.
  explicit Node(NodeOptions opts);
  ~Node();

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::uint16_t p2p_port() const;
  std::uint16_t rpc_port() const;
  std::string p2p_address() const;  // advertised host:port
  std::string rpc_address() const;

  // Control commands; each runs on the event loop. Throw ControlError.
  NodeStatus apply(const SpecSlice& slice);
  NodeStatus start(std::int64_t start_at_ms);
  NodeStatus stop(std::uint64_t settle_ms);

  NodeStatus status() const;
  std::shared_ptr<const NodeSnapshot> snapshot() const;
  std::optional<std::filesystem::path> log_path(ExperimentId run_id) const;

  /// Finalizes an open run (run-stop written) and stops all threads.
  void shutdown();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Milliseconds since the Unix epoch.
std::int64_t wall_ms();

}  // namespace powlab::node
