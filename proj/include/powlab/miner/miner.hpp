#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "powlab/core/block.hpp"

namespace powlab {

/// Hashrate is worker_count x attempts_per_sec_per_worker attempts/second.
struct MinerConfig {
  NodeId miner_id = 0;
  std::uint64_t difficulty = 1;
  std::uint32_t worker_count = 1;  // 0 disables mining
  std::uint64_t attempts_per_sec_per_worker = 5000;

  std::uint64_t hashrate() const { return worker_count * attempts_per_sec_per_worker; }
};

struct MiningJob {
  BlockHeader header;  // header.nonce is the search cursor
  BlockHash parent_hash;
  std::shared_ptr<std::atomic<bool>> cancelled = std::make_shared<std::atomic<bool>>(false);

  void cancel() const { cancelled->store(true); }
  bool is_cancelled() const { return cancelled->load(); }
};

MiningJob build_candidate(const BlockSummary& head, const MinerConfig& cfg, std::uint64_t now_ms,
                          ExperimentId experiment_id, std::mt19937_64& rng);

struct MineResult {
  enum class Status { found, exhausted, cancelled };
  Status status = Status::exhausted;
  std::optional<Block> block;
  std::uint64_t attempts = 0;
};

/// Tries up to batch_size consecutive nonces from the job cursor. The cursor
/// ends one past the last nonce tried, so a found job can keep searching.
MineResult mine_batch(MiningJob& job, std::uint64_t batch_size);

/// Attempt budget for one tick: round(hashrate * tick_ms / 1000).
std::uint64_t throttle_plan(const MinerConfig& cfg, std::uint64_t tick_ms);

/// Cancels the current job and returns one built on the new head, or nullopt
/// when the head did not actually change.
std::optional<MiningJob> on_head_change(const MiningJob& current, const BlockSummary& new_head,
                                        const MinerConfig& cfg, std::uint64_t now_ms,
                                        ExperimentId experiment_id, std::mt19937_64& rng);

/// Background mining thread paced by a token bucket. Found blocks are handed
/// to the callback; the owner decides whether they become the new head.
class Miner {
 public:
  using FoundFn = std::function<void(const Block&)>;
  using ClockFn = std::function<std::uint64_t()>;

  static constexpr std::uint64_t kTickMs = 50;

  Miner(MinerConfig cfg, ExperimentId experiment_id, FoundFn on_found, ClockFn now_ms,
        std::uint64_t seed = std::random_device{}());
  ~Miner();

  Miner(const Miner&) = delete;
  Miner& operator=(const Miner&) = delete;

  void start(const BlockSummary& head);
  void set_head(const BlockSummary& head);
  void stop();

  std::uint64_t attempts() const { return attempts_.load(); }
  std::uint64_t blocks_found() const { return found_.load(); }

 private:
  void run();

  const MinerConfig cfg_;
  const ExperimentId experiment_id_;
  FoundFn on_found_;
  ClockFn now_ms_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<MiningJob> job_;
  std::mt19937_64 rng_;
  bool stopping_ = false;
  std::thread thread_;

  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> found_{0};
};

}  // namespace powlab
