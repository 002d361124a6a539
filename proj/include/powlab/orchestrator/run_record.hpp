#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "powlab/orchestrator/aggregate.hpp"
#include "powlab/orchestrator/spec.hpp"

namespace powlab::orch {

struct NodeRunStatus {
  bool configured = false;
  bool started = false;
  bool stopped = false;
  bool finalized = false;
  bool log_collected = false;
  bool log_complete = false;  // ends with run-stop
  std::optional<RunMetrics> live_metrics;  // powlab_getMetrics after finalization
  std::optional<bool> live_matches_log;
  std::vector<std::string> errors;

  bool incomplete() const { return !log_complete; }

  json to_json() const;
  static NodeRunStatus from_json(const json& j);
  friend bool operator==(const NodeRunStatus&, const NodeRunStatus&) = default;
};

struct RunRecord {
  ExperimentId experiment_id = 0;
  std::uint32_t repetition_index = 0;
  ExperimentId run_id = 0;
  std::int64_t started_at_ms = 0;  // shared start instant given to the nodes
  std::int64_t ended_at_ms = 0;    // every reachable node acknowledged stop
  bool aborted = false;            // never started mining
  bool stopped_early = false;      // operator stop during the run
  std::string abort_reason;
  ExperimentSpec spec;
  std::map<NodeId, NodeRunStatus> nodes;
  std::map<NodeId, std::string> logs;  // file names inside the run directory
  Aggregate aggregate;

  std::vector<NodeId> incomplete_nodes() const;

  json to_json() const;
  static RunRecord from_json(const json& j);
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// {data_dir}/{experiment_id}/{run_id}/run.json plus node-{id}.jsonl.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return dir_; }
  std::filesystem::path run_dir(ExperimentId experiment_id, ExperimentId run_id) const;

  /// Refuses to overwrite an existing record.
  void save(const RunRecord& record);
  /// Returns the file name relative to the run directory.
  std::string save_log(ExperimentId experiment_id, ExperimentId run_id, NodeId node, const std::string& content);
  void save_spec(const ExperimentSpec& spec);

  std::optional<RunRecord> load(ExperimentId run_id) const;
  std::optional<std::filesystem::path> find_run_dir(ExperimentId run_id) const;
  std::optional<std::filesystem::path> log_path(ExperimentId run_id, NodeId node) const;
  std::set<ExperimentId> used_run_ids() const;
  std::vector<RunRecord> runs_of(ExperimentId experiment_id) const;

  /// Reads the stored logs of a run and recomputes its aggregate.
  Aggregate reaggregate(const RunRecord& record) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace powlab::orch
