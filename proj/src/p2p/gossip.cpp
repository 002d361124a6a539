#include "powlab/p2p/gossip.hpp"

#include <algorithm>

namespace powlab::p2p {

std::vector<NodeId> GossipState::plan(const BlockHash& hash, std::optional<NodeId> origin,
                                      const std::vector<NodeId>& live_peers) {
  if (!seen_.insert(hash).second) return {};
  std::vector<NodeId> out;
  for (auto peer : live_peers) {
    if (origin && peer == *origin) continue;
    if (sent_[peer].insert(hash).second) out.push_back(peer);
  }
  return out;
}

void GossipState::reset() {
  seen_.clear();
  sent_.clear();
}

std::optional<BackfillTracker::Request> BackfillTracker::begin(const BlockHash& target, NodeId deliverer,
                                                               const std::vector<NodeId>& live_peers,
                                                               std::uint64_t now_ms) {
  if (pending_.contains(target)) return std::nullopt;
  auto& p = pending_[target];
  p.deliverer = deliverer;
  p.asked = deliverer;
  p.attempts = 1;
  p.deadline_ms = now_ms + kTimeoutMs;
  (void)live_peers;
  return Request{target, deliverer};
}

BackfillTracker::Step BackfillTracker::advance(const BlockHash& target, Pending& p,
                                               const std::vector<NodeId>& live_peers, std::uint64_t now_ms) {
  Step step;
  const auto n = std::max<std::size_t>(live_peers.size(), 1);
  // One request to the deliverer, then kRounds passes over all peers.
  if (live_peers.empty() || p.attempts >= 1 + kRounds * n) {
    pending_.erase(target);
    step.gave_up = true;
    return step;
  }
  auto start = std::lower_bound(live_peers.begin(), live_peers.end(), p.deliverer) - live_peers.begin();
  auto peer = live_peers[(static_cast<std::size_t>(start) + p.attempts) % live_peers.size()];
  ++p.attempts;
  p.asked = peer;
  p.deadline_ms = now_ms + kTimeoutMs;
  step.next = Request{target, peer};
  return step;
}

BackfillTracker::Step BackfillTracker::not_found(const BlockHash& target, NodeId from,
                                                 const std::vector<NodeId>& live_peers, std::uint64_t now_ms) {
  auto it = pending_.find(target);
  if (it == pending_.end() || it->second.asked != from) return {};
  return advance(target, it->second, live_peers, now_ms);
}

BackfillTracker::Sweep BackfillTracker::expire(const std::vector<NodeId>& live_peers, std::uint64_t now_ms) {
  Sweep sweep;
  std::vector<BlockHash> due;
  for (const auto& [target, p] : pending_) {
    if (p.deadline_ms <= now_ms) due.push_back(target);
  }
  std::sort(due.begin(), due.end());
  for (const auto& target : due) {
    auto step = advance(target, pending_.at(target), live_peers, now_ms);
    if (step.next) sweep.requests.push_back(*step.next);
    if (step.gave_up) sweep.abandoned.push_back(target);
  }
  return sweep;
}

std::optional<std::uint64_t> BackfillTracker::next_deadline() const {
  std::optional<std::uint64_t> out;
  for (const auto& [target, p] : pending_) {
    if (!out || p.deadline_ms < *out) out = p.deadline_ms;
  }
  return out;
}

void OutboundQueue::push(std::vector<std::uint8_t> bytes, std::uint64_t now_ms, std::uint64_t delay_ms) {
  auto release = now_ms + delay_ms;
  if (!items_.empty()) release = std::max(release, items_.back().release_ms);
  items_.push_back(Item{release, std::move(bytes)});
}

OutboundQueue::Item OutboundQueue::pop() {
  auto item = std::move(items_.front());
  items_.pop_front();
  return item;
}

}  // namespace powlab::p2p
