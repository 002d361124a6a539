#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "powlab/core/block.hpp"
#include "powlab/metrics/json_codec.hpp"

namespace powlab {

enum class EventKind {
  mined,
  received,
  rejected,
  head_change,
  reorg,
  link_up,
  link_down,
  backfill_failed,
  run_start,
  run_stop,
};

std::string_view to_string(EventKind kind);

/// Throws FormatError for names outside the closed vocabulary.
EventKind event_kind_from_string(std::string_view name);

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EventRecord {
  std::int64_t ts_ms = 0;  // node clock, relative to the run's start_at
  NodeId node_id = 0;
  EventKind kind = EventKind::run_start;
  json payload = json::object();

  /// One JSON object with sorted keys and no trailing newline.
  std::string to_line() const;
  static EventRecord from_line(std::string_view line);

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Append-only JSON-Lines writer for one node and one run. Write failures do
/// not throw; they latch degraded().
class EventLog {
 public:
  static std::filesystem::path path_for(const std::filesystem::path& data_dir, ExperimentId experiment_id,
                                        ExperimentId run_id, NodeId node_id);

  explicit EventLog(std::filesystem::path file);

  bool append(const EventRecord& record);
  void close();

  const std::filesystem::path& path() const { return path_; }
  bool degraded() const { return degraded_; }
  std::int64_t last_ts() const { return last_ts_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool degraded_ = false;
  std::int64_t last_ts_ = INT64_MIN;
};

}  // namespace powlab
