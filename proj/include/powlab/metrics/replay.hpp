#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "powlab/core/block_tree.hpp"
#include "powlab/metrics/event_log.hpp"
#include "powlab/metrics/metrics.hpp"

namespace powlab {

class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ReplayMode { strict, lenient };

struct NodeLog {
  std::string source;  // file name, for diagnostics
  std::vector<EventRecord> records;
};

/// Parses JSON-Lines. Strict mode throws ReplayError naming the source and
/// line; lenient mode skips bad lines and appends a warning.
NodeLog parse_log(std::istream& in, const std::string& source, ReplayMode mode = ReplayMode::strict,
                  std::vector<std::string>* warnings = nullptr);
NodeLog read_log(const std::filesystem::path& file, ReplayMode mode = ReplayMode::strict,
                 std::vector<std::string>* warnings = nullptr);

struct HeadChange {
  std::int64_t ts_ms = 0;
  BlockHash head;
  std::uint64_t height = 0;
};

struct NodeReplay {
  NodeId node_id = 0;
  ExperimentId run_id = 0;
  BlockHash genesis;
  std::vector<HeadChange> heads;  // starts with genesis at the run-start time
  RunMetrics metrics;
  bool complete = false;  // ends with run-stop
  std::optional<std::int64_t> mining_stopped_ts_ms;
  std::int64_t last_ts_ms = 0;
  std::uint64_t blocks_mined = 0;
  std::vector<BlockHash> canonical;
  std::vector<BlockHash> stored;  // every block in the reconstructed tree

  /// Head in effect at `ts_ms` (all records at that instant applied).
  const HeadChange& head_at(std::int64_t ts_ms) const;
};

struct ReplayResult {
  std::vector<EventRecord> timeline;  // all nodes, by ts_ms then node_id
  std::map<NodeId, NodeReplay> nodes;
};

/// Rebuilds each node's block tree from its mined/received records and
/// derives the head sequence and final metrics. Pure.
ReplayResult replay(const std::vector<NodeLog>& logs);

NodeReplay replay_node(const NodeLog& log);

}  // namespace powlab
