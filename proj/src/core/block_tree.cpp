#include "powlab/core/block_tree.hpp"

#include <algorithm>
#include <stdexcept>

namespace powlab {

std::string_view to_string(ValidationResult v) {
  switch (v) {
    case ValidationResult::ok: return "ok";
    case ValidationResult::unknown_parent: return "unknown-parent";
    case ValidationResult::bad_height: return "bad-height";
    case ValidationResult::bad_pow: return "bad-pow";
    case ValidationResult::bad_hash: return "bad-hash";
    case ValidationResult::duplicate: return "duplicate";
  }
  return "?";
}

std::string_view to_string(InsertKind k) {
  switch (k) {
    case InsertKind::extended_head: return "extended-head";
    case InsertKind::new_side_branch: return "new-side-branch";
    case InsertKind::reorg: return "reorg";
    case InsertKind::duplicate: return "duplicate";
    case InsertKind::orphaned: return "orphaned";
    case InsertKind::rejected: return "rejected";
  }
  return "?";
}

BlockTree::BlockTree(const Block& genesis) : head_(genesis.hash), genesis_(genesis.hash) {
  if (genesis.header.height != 0 || !genesis.header.parent_hash.is_zero() || genesis.header.difficulty == 0) {
    throw std::invalid_argument("not a genesis block");
  }
  blocks_.emplace(genesis.hash, Entry{genesis, next_seq_++, genesis.header.difficulty});
  by_height_[0].push_back(genesis.hash);
  canonical_.push_back(genesis.hash);
}

const Block* BlockTree::find(const BlockHash& hash) const {
  auto it = blocks_.find(hash);
  return it == blocks_.end() ? nullptr : &it->second.block;
}

const std::vector<BlockHash>& BlockTree::children(const BlockHash& hash) const {
  static const std::vector<BlockHash> kNone;
  auto it = children_.find(hash);
  return it == children_.end() ? kNone : it->second;
}

const Block* BlockTree::canonical_at(std::uint64_t height) const {
  if (height >= canonical_.size()) return nullptr;
  return &blocks_.at(canonical_[height]).block;
}

bool BlockTree::is_canonical(const BlockHash& hash) const {
  auto it = blocks_.find(hash);
  if (it == blocks_.end()) return false;
  auto h = it->second.block.header.height;
  return h < canonical_.size() && canonical_[h] == hash;
}

ValidationResult BlockTree::validate(const Block& block) const {
  if (blocks_.contains(block.hash) || orphan_index_.contains(block.hash)) return ValidationResult::duplicate;
  if (!block.hash_is_consistent()) return ValidationResult::bad_hash;
  if (block.header.difficulty == 0 || !meets_difficulty(block.hash, block.header.difficulty)) {
    return ValidationResult::bad_pow;
  }
  if (block.header.height == 0) return ValidationResult::bad_height;
  auto parent = blocks_.find(block.header.parent_hash);
  if (parent == blocks_.end()) return ValidationResult::unknown_parent;
  if (block.header.height != parent->second.block.header.height + 1) return ValidationResult::bad_height;
  return ValidationResult::ok;
}

InsertOutcome BlockTree::insert(const Block& block) {
  InsertOutcome out;
  out.old_head = head_;
  out.new_head = head_;

  out.validation = validate(block);
  switch (out.validation) {
    case ValidationResult::duplicate:
      out.kind = InsertKind::duplicate;
      return out;
    case ValidationResult::unknown_parent:
      buffer_orphan(block);
      out.kind = InsertKind::orphaned;
      return out;
    case ValidationResult::ok:
      break;
    default:
      out.kind = InsertKind::rejected;
      return out;
  }

  store(block);
  out.connected.push_back(block);

  // Drain orphans unlocked by anything connected so far.
  for (std::size_t i = 0; i < out.connected.size(); ++i) {
    auto waiting = orphans_.find(out.connected[i].hash);
    if (waiting == orphans_.end()) continue;
    auto batch = std::move(waiting->second);
    orphans_.erase(waiting);
    for (const auto& orphan : batch) {
      orphan_index_.erase(orphan.hash);
      if (validate(orphan) == ValidationResult::ok) {
        store(orphan);
        out.connected.push_back(orphan);
      }
    }
  }

  out.new_head = head_;
  if (out.new_head == out.old_head) {
    out.kind = InsertKind::new_side_branch;
  } else {
    auto fork = common_ancestor(out.old_head, out.new_head);
    if (fork == out.old_head) {
      out.kind = InsertKind::extended_head;
    } else {
      out.kind = InsertKind::reorg;
      out.reorg_depth = blocks_.at(out.old_head).block.header.height - blocks_.at(fork).block.header.height;
    }
  }
  return out;
}

bool BlockTree::store(const Block& block) {
  const auto& parent = blocks_.at(block.header.parent_hash);
  Entry e{block, next_seq_++, parent.total_difficulty + block.header.difficulty};
  auto td = e.total_difficulty;
  blocks_.emplace(block.hash, std::move(e));
  children_[block.header.parent_hash].push_back(block.hash);
  by_height_[block.header.height].push_back(block.hash);
  // Equal weight keeps the current head: it arrived first.
  if (td > blocks_.at(head_).total_difficulty) {
    set_head(block.hash);
    return true;
  }
  return false;
}

void BlockTree::set_head(const BlockHash& new_head) {
  std::vector<BlockHash> path;
  BlockHash cursor = new_head;
  while (true) {
    const auto& b = blocks_.at(cursor).block;
    auto h = b.header.height;
    if (h < canonical_.size() && canonical_[h] == cursor) break;
    path.push_back(cursor);
    cursor = b.header.parent_hash;
  }
  canonical_.resize(blocks_.at(cursor).block.header.height + 1);
  canonical_.insert(canonical_.end(), path.rbegin(), path.rend());
  head_ = new_head;
}

BlockHash BlockTree::common_ancestor(BlockHash a, BlockHash b) const {
  auto height = [&](const BlockHash& h) { return blocks_.at(h).block.header.height; };
  auto parent = [&](const BlockHash& h) { return blocks_.at(h).block.header.parent_hash; };
  while (height(a) > height(b)) a = parent(a);
  while (height(b) > height(a)) b = parent(b);
  while (a != b) {
    a = parent(a);
    b = parent(b);
  }
  return a;
}

void BlockTree::buffer_orphan(const Block& block) {
  while (orphan_index_.size() >= kMaxOrphans && !orphan_fifo_.empty()) {
    auto [seq, oldest] = orphan_fifo_.front();
    orphan_fifo_.pop_front();
    auto it = orphan_index_.find(oldest);
    if (it != orphan_index_.end() && it->second.seq == seq) unlink_orphan(oldest);
  }
  auto seq = next_orphan_seq_++;
  orphans_[block.header.parent_hash].push_back(block);
  orphan_index_[block.hash] = OrphanRef{block.header.parent_hash, seq};
  orphan_fifo_.emplace_back(seq, block.hash);
}

void BlockTree::unlink_orphan(const BlockHash& hash) {
  auto ref = orphan_index_.at(hash);
  orphan_index_.erase(hash);
  auto it = orphans_.find(ref.parent);
  if (it == orphans_.end()) return;
  std::erase_if(it->second, [&](const Block& b) { return b.hash == hash; });
  if (it->second.empty()) orphans_.erase(it);
}

std::vector<Block> BlockTree::drop_orphans(const BlockHash& parent) {
  std::vector<Block> dropped;
  std::vector<BlockHash> frontier{parent};
  while (!frontier.empty()) {
    auto p = frontier.back();
    frontier.pop_back();
    auto it = orphans_.find(p);
    if (it == orphans_.end()) continue;
    auto batch = std::move(it->second);
    orphans_.erase(it);
    for (auto& b : batch) {
      orphan_index_.erase(b.hash);
      frontier.push_back(b.hash);
      dropped.push_back(std::move(b));
    }
  }
  return dropped;
}

std::vector<Block> BlockTree::orphans() const {
  std::vector<std::pair<std::uint64_t, Block>> ordered;
  for (const auto& [parent, list] : orphans_) {
    for (const auto& b : list) ordered.emplace_back(orphan_index_.at(b.hash).seq, b);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<Block> out;
  out.reserve(ordered.size());
  for (auto& [seq, b] : ordered) out.push_back(std::move(b));
  return out;
}

std::vector<BlockHash> BlockTree::missing_parents() const {
  std::vector<BlockHash> out;
  for (const auto& [parent, list] : orphans_) {
    if (!orphan_index_.contains(parent)) out.push_back(parent);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<const Block*> BlockTree::blocks_by_arrival() const {
  std::vector<const Entry*> entries;
  entries.reserve(blocks_.size());
  for (const auto& [hash, e] : blocks_) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->arrival_seq < b->arrival_seq; });
  std::vector<const Block*> out;
  out.reserve(entries.size());
  for (auto* e : entries) out.push_back(&e->block);
  return out;
}

std::vector<BlockHash> BlockTree::uncle_set() const {
  std::vector<BlockHash> out;
  for (const auto* b : blocks_by_arrival()) {
    if (b->header.height != 0 && !is_canonical(b->hash)) out.push_back(b->hash);
  }
  return out;
}

ChainView BlockTree::chain_view(std::size_t depth) const {
  if (depth == 0) throw std::invalid_argument("chain view depth must be >= 1");
  ChainView view;
  view.head_height = canonical_.size() - 1;
  std::uint64_t first = view.head_height + 1 > depth ? view.head_height + 1 - depth : 0;
  for (auto h = first; h <= view.head_height; ++h) {
    ChainViewEntry entry;
    entry.height = h;
    entry.canonical = BlockSummary::of(blocks_.at(canonical_[h]).block);
    for (const auto& hash : by_height_.at(h)) {
      if (hash != canonical_[h]) entry.side.push_back(BlockSummary::of(blocks_.at(hash).block));
    }
    view.window.push_back(std::move(entry));
  }
  return view;
}

std::optional<BlockHash> BlockTree::orphan_parent(const BlockHash& hash) const {
  auto it = orphan_index_.find(hash);
  if (it == orphan_index_.end()) return std::nullopt;
  return it->second.parent;
}

}  // namespace powlab
