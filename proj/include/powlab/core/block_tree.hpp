#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "powlab/core/block.hpp"

namespace powlab {

using TotalDifficulty = unsigned __int128;

enum class ValidationResult { ok, unknown_parent, bad_height, bad_pow, bad_hash, duplicate };

std::string_view to_string(ValidationResult v);

enum class InsertKind { extended_head, new_side_branch, reorg, duplicate, orphaned, rejected };

std::string_view to_string(InsertKind k);

struct InsertOutcome {
  InsertKind kind = InsertKind::duplicate;
  ValidationResult validation = ValidationResult::ok;  // reason when rejected
  BlockHash old_head;
  BlockHash new_head;
  std::uint64_t reorg_depth = 0;  // blocks abandoned from the old canonical chain
  /// Every block that became part of the tree during this call, in storage
  /// order: the inserted block first, then any orphans it unlocked.
  std::vector<Block> connected;

  bool head_changed() const { return old_head != new_head; }
};

struct ChainViewEntry {
  std::uint64_t height = 0;
  BlockSummary canonical;
  std::vector<BlockSummary> side;
};

/// The last few heights of the tree, as drawn by the visualization.
struct ChainView {
  std::vector<ChainViewEntry> window;
  std::uint64_t head_height = 0;
};

/// Per-node store of every known block. Fork choice is maximum total
/// difficulty with first-seen tie-break. Not thread-safe: one owner mutates.
class BlockTree {
 public:
  static constexpr std::size_t kMaxOrphans = 1024;

  explicit BlockTree(const Block& genesis);

  ValidationResult validate(const Block& block) const;
  InsertOutcome insert(const Block& block);

  const BlockHash& head() const { return head_; }
  const BlockHash& genesis() const { return genesis_; }
  const Block& head_block() const { return blocks_.at(head_).block; }

  const Block* find(const BlockHash& hash) const;
  bool contains(const BlockHash& hash) const { return blocks_.contains(hash); }
  bool is_orphan(const BlockHash& hash) const { return orphan_index_.contains(hash); }
  /// Parent a buffered orphan is waiting for.
  std::optional<BlockHash> orphan_parent(const BlockHash& hash) const;

  TotalDifficulty total_difficulty(const BlockHash& hash) const { return blocks_.at(hash).total_difficulty; }
  std::uint64_t arrival_seq(const BlockHash& hash) const { return blocks_.at(hash).arrival_seq; }
  const std::vector<BlockHash>& children(const BlockHash& hash) const;

  /// Canonical block at a height, or nullptr above the head.
  const Block* canonical_at(std::uint64_t height) const;
  bool is_canonical(const BlockHash& hash) const;

  /// Genesis-to-head path.
  std::vector<BlockHash> canonical_chain() const { return canonical_; }

  /// Stored non-genesis blocks off the canonical chain, in arrival order.
  std::vector<BlockHash> uncle_set() const;

  /// Last `depth` heights ending at the head. Throws std::invalid_argument
  /// for depth 0.
  ChainView chain_view(std::size_t depth) const;

  /// Stored blocks (genesis included) in arrival order.
  std::vector<const Block*> blocks_by_arrival() const;

  std::size_t size() const { return blocks_.size(); }
  std::size_t orphan_count() const { return orphan_index_.size(); }
  std::vector<Block> orphans() const;

  /// Missing parents that currently have buffered orphans.
  std::vector<BlockHash> missing_parents() const;

  /// Removes every orphan waiting on `parent`, plus orphans waiting on those,
  /// and returns them.
  std::vector<Block> drop_orphans(const BlockHash& parent);

 private:
  struct Entry {
    Block block;
    std::uint64_t arrival_seq = 0;
    TotalDifficulty total_difficulty = 0;
  };

  bool store(const Block& block);
  void buffer_orphan(const Block& block);
  void unlink_orphan(const BlockHash& hash);
  void set_head(const BlockHash& new_head);
  BlockHash common_ancestor(BlockHash a, BlockHash b) const;

  std::unordered_map<BlockHash, Entry> blocks_;
  std::unordered_map<BlockHash, std::vector<BlockHash>> children_;
  std::unordered_map<std::uint64_t, std::vector<BlockHash>> by_height_;
  std::vector<BlockHash> canonical_;
  BlockHash head_;
  BlockHash genesis_;
  std::uint64_t next_seq_ = 0;

  // Orphans keyed by the parent they wait for; eviction order in orphan_fifo_.
  std::unordered_map<BlockHash, std::vector<Block>> orphans_;
  struct OrphanRef {
    BlockHash parent;
    std::uint64_t seq = 0;
  };
  std::unordered_map<BlockHash, OrphanRef> orphan_index_;
  std::deque<std::pair<std::uint64_t, BlockHash>> orphan_fifo_;  // may hold stale entries
  std::uint64_t next_orphan_seq_ = 0;
};

}  // namespace powlab
