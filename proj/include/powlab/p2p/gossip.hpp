#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "powlab/core/block.hpp"

namespace powlab::p2p {

/// Flood-with-dedup bookkeeping for one experiment.
class GossipState {
 public:
  /// Peers that should receive new-block for `hash`; empty if the hash was
  /// already gossiped. `origin` is the peer it came from (nullopt = mined).
  std::vector<NodeId> plan(const BlockHash& hash, std::optional<NodeId> origin,
                           const std::vector<NodeId>& live_peers);

  bool seen(const BlockHash& hash) const { return seen_.contains(hash); }
  void reset();

 private:
  std::unordered_set<BlockHash> seen_;
  std::map<NodeId, std::unordered_set<BlockHash>> sent_;
};

/// Ancestor acquisition for orphans. Asks the peer that delivered the orphan
/// first, then every live peer round-robin with a timeout per request, and
/// gives up after three full rounds.
class BackfillTracker {
 public:
  static constexpr std::uint64_t kTimeoutMs = 2000;
  static constexpr std::size_t kRounds = 3;

  struct Request {
    BlockHash target;
    NodeId peer = 0;
  };

  /// Starts tracking `target`. Returns the first request, or nullopt if the
  /// target is already being fetched.
  std::optional<Request> begin(const BlockHash& target, NodeId deliverer, const std::vector<NodeId>& live_peers,
                               std::uint64_t now_ms);

  /// The block arrived by any route.
  void resolve(const BlockHash& target) { pending_.erase(target); }

  /// A peer answered not-found: move to the next peer (or give up).
  struct Step {
    std::optional<Request> next;
    bool gave_up = false;
  };
  Step not_found(const BlockHash& target, NodeId from, const std::vector<NodeId>& live_peers, std::uint64_t now_ms);

  /// Expired requests advance; returns follow-up requests and abandoned targets.
  struct Sweep {
    std::vector<Request> requests;
    std::vector<BlockHash> abandoned;
  };
  Sweep expire(const std::vector<NodeId>& live_peers, std::uint64_t now_ms);

  bool pending(const BlockHash& target) const { return pending_.contains(target); }
  std::optional<std::uint64_t> next_deadline() const;
  void reset() { pending_.clear(); }

 private:
  struct Pending {
    NodeId deliverer = 0;
    NodeId asked = 0;
    std::size_t attempts = 0;
    std::uint64_t deadline_ms = 0;
  };

  Step advance(const BlockHash& target, Pending& p, const std::vector<NodeId>& live_peers, std::uint64_t now_ms);

  std::unordered_map<BlockHash, Pending> pending_;
};

/// Per-link send queue holding each frame until its release time. Release
/// times are non-decreasing, so transmission keeps send order.
class OutboundQueue {
 public:
  struct Item {
    std::uint64_t release_ms = 0;
    std::vector<std::uint8_t> bytes;
  };

  void push(std::vector<std::uint8_t> bytes, std::uint64_t now_ms, std::uint64_t delay_ms);
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  const Item& front() const { return items_.front(); }
  bool ready(std::uint64_t now_ms) const { return !items_.empty() && items_.front().release_ms <= now_ms; }
  Item pop();
  void clear() { items_.clear(); }

 private:
  std::deque<Item> items_;
};

}  // namespace powlab::p2p
