#pragma once

// Brute-force fork-choice reference, independent of BlockTree. It derives
// each block's arrival rank from the delivery order alone and then walks
// every root-to-leaf path.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "test_support.hpp"

namespace powlab::test {

struct RandomDag {
  Block genesis;
  std::vector<Block> blocks;  // topological: parents precede children
  std::vector<int> parent;    // index into blocks, -1 for genesis
};

inline RandomDag random_dag(std::mt19937_64& rng, int count, std::uint64_t max_difficulty) {
  RandomDag dag{make_genesis(static_cast<ExperimentId>(rng())), {}, {}};
  for (int i = 0; i < count; ++i) {
    int p = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1)) - 1;
    const Block& parent = p < 0 ? dag.genesis : dag.blocks[static_cast<std::size_t>(p)];
    auto difficulty = 1 + rng() % max_difficulty;
    dag.blocks.push_back(child_of(parent, difficulty, static_cast<NodeId>(1 + rng() % 5),
                                  static_cast<std::uint64_t>(i)));
    dag.parent.push_back(p);
  }
  return dag;
}

struct OracleResult {
  BlockHash head;
  bool tie = false;  // more than one leaf shares the maximal total difficulty
};

/// `order` is a permutation of block indices giving delivery order.
inline OracleResult oracle_head(const RandomDag& dag, const std::vector<int>& order) {
  const auto n = dag.blocks.size();
  std::vector<int> delivered(n);
  for (std::size_t s = 0; s < order.size(); ++s) delivered[static_cast<std::size_t>(order[s])] = static_cast<int>(s);

  // A block connects at the step where it and all its ancestors are present.
  std::vector<int> connect(n);
  for (std::size_t i = 0; i < n; ++i) {
    int p = dag.parent[i];
    connect[i] = std::max(delivered[i], p < 0 ? -1 : connect[static_cast<std::size_t>(p)]);
  }

  std::vector<std::vector<int>> kids(n);
  std::vector<int> roots;
  for (std::size_t i = 0; i < n; ++i) {
    (dag.parent[i] < 0 ? roots : kids[static_cast<std::size_t>(dag.parent[i])]).push_back(static_cast<int>(i));
  }
  auto by_delivery = [&](int a, int b) { return delivered[static_cast<std::size_t>(a)] < delivered[static_cast<std::size_t>(b)]; };
  for (auto& k : kids) std::sort(k.begin(), k.end(), by_delivery);

  // Within one step the newly connected blocks appear breadth-first from the
  // delivered block, children in the order they were buffered.
  std::vector<int> rank(n, 0);
  for (std::size_t s = 0; s < order.size(); ++s) {
    int x = order[s];
    if (connect[static_cast<std::size_t>(x)] != static_cast<int>(s)) continue;
    std::deque<int> queue{x};
    int r = 0;
    while (!queue.empty()) {
      int b = queue.front();
      queue.pop_front();
      rank[static_cast<std::size_t>(b)] = r++;
      for (int c : kids[static_cast<std::size_t>(b)]) {
        if (connect[static_cast<std::size_t>(c)] == static_cast<int>(s)) queue.push_back(c);
      }
    }
  }

  // Walk every root-to-leaf path; the genesis weight is common to all.
  std::uint64_t best_td = 0;
  std::tuple<int, int> best_key{0, 0};
  int best = -1;
  int ties = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!kids[i].empty()) continue;
    std::uint64_t td = 0;
    for (int b = static_cast<int>(i); b >= 0; b = dag.parent[static_cast<std::size_t>(b)]) {
      td += dag.blocks[static_cast<std::size_t>(b)].header.difficulty;
    }
    std::tuple<int, int> key{connect[i], rank[i]};
    if (best < 0 || td > best_td) {
      best = static_cast<int>(i);
      best_td = td;
      best_key = key;
      ties = 1;
    } else if (td == best_td) {
      ++ties;
      if (key < best_key) {
        best = static_cast<int>(i);
        best_key = key;
      }
    }
  }
  if (best < 0) return {dag.genesis.hash, false};
  return {dag.blocks[static_cast<std::size_t>(best)].hash, ties > 1};
}

inline std::vector<int> random_order(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace powlab::test
