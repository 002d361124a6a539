#include "powlab/metrics/replay.hpp"

#include <algorithm>
#include <fstream>

#include "powlab/util/bytes.hpp"

namespace powlab {

NodeLog parse_log(std::istream& in, const std::string& source, ReplayMode mode, std::vector<std::string>* warnings) {
  NodeLog log;
  log.source = source;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    bool terminated = !in.eof();
    try {
      if (!terminated) throw FormatError("truncated line (no newline)");
      log.records.push_back(EventRecord::from_line(line));
    } catch (const FormatError& e) {
      auto where = source + ":" + std::to_string(number) + ": " + e.what();
      if (mode == ReplayMode::strict) throw ReplayError(where);
      if (warnings) warnings->push_back(where);
    }
  }
  return log;
}

NodeLog read_log(const std::filesystem::path& file, ReplayMode mode, std::vector<std::string>* warnings) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ReplayError("cannot open " + file.string());
  return parse_log(in, file.string(), mode, warnings);
}

const HeadChange& NodeReplay::head_at(std::int64_t ts_ms) const {
  const HeadChange* current = &heads.front();
  for (const auto& h : heads) {
    if (h.ts_ms > ts_ms) break;
    current = &h;
  }
  return *current;
}

NodeReplay replay_node(const NodeLog& log) {
  NodeReplay out;
  std::optional<BlockTree> tree;

  auto fail = [&](const EventRecord& r, const std::string& why) {
    return ReplayError(log.source + ": " + std::string(to_string(r.kind)) + " at ts " + std::to_string(r.ts_ms) +
                       ": " + why);
  };

  for (const auto& r : log.records) {
    out.last_ts_ms = r.ts_ms;
    if (r.kind == EventKind::run_start) {
      out.node_id = r.node_id;
      out.run_id = r.payload.at("run_id").get<ExperimentId>();
      auto genesis = make_genesis(out.run_id);
      out.genesis = genesis.hash;
      tree.emplace(genesis);
      out.heads = {HeadChange{r.ts_ms, genesis.hash, 0}};
      continue;
    }
    if (!tree) throw fail(r, "record before run-start");

    switch (r.kind) {
      case EventKind::mined:
      case EventKind::received: {
        Block block;
        try {
          block = block_from_json(r.payload.at("block"));
        } catch (const std::exception& e) {
          throw fail(r, e.what());
        }
        if (r.kind == EventKind::mined) ++out.blocks_mined;
        auto result = tree->insert(block);
        if (result.head_changed()) {
          out.heads.push_back(HeadChange{r.ts_ms, result.new_head, tree->head_block().header.height});
        }
        break;
      }
      case EventKind::backfill_failed:
        tree->drop_orphans(hash_from_json(r.payload.at("missing_parent")));
        break;
      case EventKind::run_stop:
        out.complete = true;
        if (r.payload.contains("mining_stopped_ts_ms")) {
          out.mining_stopped_ts_ms = r.payload.at("mining_stopped_ts_ms").get<std::int64_t>();
        }
        break;
      default:
        break;
    }
  }

  if (tree) {
    out.metrics = compute_node_metrics(*tree, out.node_id);
    out.canonical = tree->canonical_chain();
    for (const auto* b : tree->blocks_by_arrival()) out.stored.push_back(b->hash);
  }
  return out;
}

ReplayResult replay(const std::vector<NodeLog>& logs) {
  ReplayResult result;
  for (const auto& log : logs) {
    result.timeline.insert(result.timeline.end(), log.records.begin(), log.records.end());
    if (log.records.empty()) continue;
    auto node = replay_node(log);
    result.nodes[node.node_id] = std::move(node);
  }
  std::stable_sort(result.timeline.begin(), result.timeline.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.ts_ms != b.ts_ms) return a.ts_ms < b.ts_ms;
    return a.node_id < b.node_id;
  });
  return result;
}

}  // namespace powlab
