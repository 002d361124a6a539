#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "powlab/p2p/wire.hpp"

namespace powlab::p2p {

using ConnId = std::uint64_t;

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  /// "host:port" or ":port" (any interface). Throws std::invalid_argument.
  static Endpoint parse(std::string_view text);
  std::string str() const { return host + ":" + std::to_string(port); }

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Length-prefixed frames over TCP with a uniform outbound delay. Dialled
/// targets are redialled one second after any failure or close until the
/// target set changes. All handlers run on the transport's I/O thread.
class Transport {
 public:
  struct Handlers {
    std::function<void(ConnId, std::optional<NodeId> dialed)> opened;
    std::function<void(ConnId, WireMessage)> message;
    std::function<void(ConnId, std::string reason)> closed;
  };

  static constexpr std::uint64_t kRedialMs = 1000;

  /// Binds the listener immediately; throws std::system_error if the port is
  /// unavailable.
  Transport(const Endpoint& listen, Handlers handlers);
  ~Transport();

  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  std::uint16_t port() const;

  void set_outbound_delay(std::uint64_t delay_ms);

  /// Drops every connection and starts dialling the given targets.
  void connect_to(std::map<NodeId, Endpoint> targets);

  /// Drops every connection and stops dialling.
  void disconnect_all() { connect_to({}); }

  void send(ConnId conn, const WireMessage& msg);
  void close(ConnId conn, std::string reason = "closed locally");

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace powlab::p2p
