#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "powlab/orchestrator/registry.hpp"
#include "powlab/orchestrator/run_record.hpp"
#include "powlab/orchestrator/spec.hpp"
#include "powlab/p2p/transport.hpp"

namespace powlab::orch {

struct OrchestratorOptions {
  std::filesystem::path data_dir = "orchestrator-data";
  std::int64_t start_lead_ms = 3000;        // start_at = now + lead
  std::uint64_t settle_ms = 6000;           // nodes keep gossiping this long after stop
  std::int64_t configure_timeout_ms = 10000;
  int node_timeout_s = 10;                  // per request, including log collection
};

/// An API call the orchestrator refuses; `status` is the HTTP status.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class ExperimentState { validated, running, completed, aborted, stopped };
std::string_view to_string(ExperimentState s);

/// Registry, experiment lifecycle and run persistence. One experiment runs
/// at a time; its repetitions execute sequentially on a background thread.
class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorOptions opts);
  ~Orchestrator();

  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  Registry& registry() { return registry_; }
  const RunStore& store() const { return store_; }

  struct Submission {
    std::optional<ExperimentSpec> spec;
    std::vector<Violation> violations;
    json to_json() const;
  };
  /// Validates against the registry; a valid spec is kept for start().
  Submission submit(const json& spec_json);

  void start(ExperimentId id);
  void stop(ExperimentId id);
  ExperimentState state(ExperimentId id) const;
  /// Blocks until the experiment leaves the running state.
  bool wait(ExperimentId id, std::chrono::milliseconds timeout) const;

  json experiment_json(ExperimentId id) const;
  json runs_json(ExperimentId id) const;
  std::vector<RunRecord> runs(ExperimentId id) const;

  /// Registered nodes with the colour the latest spec assigned them.
  json nodes_json() const;

  /// One repetition, synchronously. Exposed for tests.
  RunRecord run_once(const ExperimentSpec& spec, std::uint32_t repetition, const std::atomic<bool>& cancel);

  const OrchestratorOptions& options() const { return opts_; }

 private:
  struct Progress {
    ExperimentId run_id = 0;
    std::uint32_t repetition_index = 0;
    std::string phase;
    std::int64_t start_at_ms = 0;
    std::int64_t ends_at_ms = 0;
  };
  struct Experiment {
    ExperimentSpec spec;
    ExperimentState state = ExperimentState::validated;
    std::vector<RunRecord> runs;
    std::optional<Progress> progress;
    std::string error;
  };

  void run_all(ExperimentId id);
  void set_progress(ExperimentId id, std::optional<Progress> p);
  bool sleep_until(std::int64_t wall_ms, const std::atomic<bool>& cancel);

  OrchestratorOptions opts_;
  Registry registry_;
  RunStore store_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<ExperimentId, Experiment> experiments_;
  std::map<NodeId, std::string> colors_;
  std::optional<ExperimentId> active_;
  std::atomic<bool> cancel_{false};
  std::thread runner_;
};

/// HTTP JSON API for nodes, the CLI and the browser UI.
class ApiServer {
 public:
  /// Binds immediately; throws std::system_error if the port is taken.
  ApiServer(Orchestrator& orch, const p2p::Endpoint& listen, std::optional<std::filesystem::path> ui_dir = {});
  ~ApiServer();

  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::int64_t wall_ms();

}  // namespace powlab::orch
