#include "powlab/miner/miner.hpp"

#include <algorithm>
#include <chrono>

namespace powlab {

MiningJob build_candidate(const BlockSummary& head, const MinerConfig& cfg, std::uint64_t now_ms,
                          ExperimentId experiment_id, std::mt19937_64& rng) {
  MiningJob job;
  job.header.height = head.height + 1;
  job.header.parent_hash = head.hash;
  job.header.miner_id = cfg.miner_id;
  job.header.difficulty = cfg.difficulty;
  job.header.timestamp_ms = now_ms;
  job.header.nonce = rng();
  job.header.experiment_id = experiment_id;
  job.parent_hash = head.hash;
  return job;
}

MineResult mine_batch(MiningJob& job, std::uint64_t batch_size) {
  MineResult out;
  if (job.is_cancelled()) {
    out.status = MineResult::Status::cancelled;
    return out;
  }
  for (std::uint64_t i = 0; i < batch_size; ++i) {
    auto hash = hash_header(job.header);
    ++out.attempts;
    if (meets_difficulty(hash, job.header.difficulty)) {
      out.status = MineResult::Status::found;
      out.block = Block{job.header, hash};
      ++job.header.nonce;
      return out;
    }
    ++job.header.nonce;
  }
  out.status = MineResult::Status::exhausted;
  return out;
}

std::uint64_t throttle_plan(const MinerConfig& cfg, std::uint64_t tick_ms) {
  // round-half-up of hashrate * tick / 1000 in integers
  return (cfg.hashrate() * tick_ms + 500) / 1000;
}

std::optional<MiningJob> on_head_change(const MiningJob& current, const BlockSummary& new_head,
                                        const MinerConfig& cfg, std::uint64_t now_ms,
                                        ExperimentId experiment_id, std::mt19937_64& rng) {
  if (new_head.hash == current.parent_hash) return std::nullopt;
  current.cancel();
  return build_candidate(new_head, cfg, now_ms, experiment_id, rng);
}

Miner::Miner(MinerConfig cfg, ExperimentId experiment_id, FoundFn on_found, ClockFn now_ms, std::uint64_t seed)
    : cfg_(cfg), experiment_id_(experiment_id), on_found_(std::move(on_found)), now_ms_(std::move(now_ms)), rng_(seed) {}

Miner::~Miner() { stop(); }

void Miner::start(const BlockSummary& head) {
  std::lock_guard lock(mu_);
  if (thread_.joinable() || cfg_.worker_count == 0) return;
  job_ = build_candidate(head, cfg_, now_ms_(), experiment_id_, rng_);
  stopping_ = false;
  thread_ = std::thread([this] { run(); });
}

void Miner::set_head(const BlockSummary& head) {
  std::lock_guard lock(mu_);
  if (!job_) return;
  if (auto next = on_head_change(*job_, head, cfg_, now_ms_(), experiment_id_, rng_)) job_ = std::move(next);
}

void Miner::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    if (job_) job_->cancel();
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Miner::run() {
  using clock = std::chrono::steady_clock;
  const auto tick = std::chrono::milliseconds(kTickMs);
  const std::uint64_t per_tick = throttle_plan(cfg_, kTickMs);
  const std::uint64_t burst = 2 * per_tick;
  std::uint64_t tokens = 0;
  auto next_tick = clock::now();

  while (true) {
    {
      std::unique_lock lock(mu_);
      if (cv_.wait_until(lock, next_tick, [this] { return stopping_; })) return;
    }
    next_tick += tick;
    tokens = std::min(tokens + per_tick, burst);

    while (tokens > 0) {
      MiningJob job;
      {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        job = *job_;
      }
      auto result = mine_batch(job, tokens);
      tokens -= result.attempts;
      attempts_ += result.attempts;
      {
        std::lock_guard lock(mu_);
        // Keep the advanced cursor unless the head moved meanwhile.
        if (job_ && job_->cancelled == job.cancelled && !job.is_cancelled()) job_->header.nonce = job.header.nonce;
      }
      if (result.status == MineResult::Status::found) {
        ++found_;
        on_found_(*result.block);
      } else {
        break;
      }
    }
    // Do not accumulate a backlog after a stall.
    auto now = clock::now();
    if (next_tick + tick < now) next_tick = now;
  }
}

}  // namespace powlab
