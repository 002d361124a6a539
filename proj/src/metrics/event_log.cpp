#include "powlab/metrics/event_log.hpp"

#include <array>
#include <system_error>

namespace powlab {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 10> kKinds{{
    {EventKind::mined, "mined"},
    {EventKind::received, "received"},
    {EventKind::rejected, "rejected"},
    {EventKind::head_change, "head-change"},
    {EventKind::reorg, "reorg"},
    {EventKind::link_up, "link-up"},
    {EventKind::link_down, "link-down"},
    {EventKind::backfill_failed, "backfill-failed"},
    {EventKind::run_start, "run-start"},
    {EventKind::run_stop, "run-stop"},
}};

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "?";
}

EventKind event_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  throw FormatError("unknown event kind '" + std::string(name) + "'");
}

std::string EventRecord::to_line() const {
  json j{{"ts_ms", ts_ms}, {"node_id", node_id}, {"kind", to_string(kind)}, {"payload", payload}};
  return j.dump();
}

EventRecord EventRecord::from_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.size() != 4) throw FormatError("record must have exactly ts_ms, node_id, kind, payload");
  EventRecord r;
  try {
    r.ts_ms = j.at("ts_ms").get<std::int64_t>();
    r.node_id = j.at("node_id").get<NodeId>();
    r.kind = event_kind_from_string(j.at("kind").get<std::string>());
    r.payload = j.at("payload");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad record: ") + e.what());
  }
  if (!r.payload.is_object()) throw FormatError("payload must be an object");
  return r;
}

std::filesystem::path EventLog::path_for(const std::filesystem::path& data_dir, ExperimentId experiment_id,
                                         ExperimentId run_id, NodeId node_id) {
  return data_dir / std::to_string(experiment_id) / std::to_string(run_id) /
         ("node-" + std::to_string(node_id) + ".jsonl");
}

EventLog::EventLog(std::filesystem::path file) : path_(std::move(file)) {
  std::error_code ec;
  std::filesystem::create_directories(path_.parent_path(), ec);
  out_.open(path_, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out_) degraded_ = true;
}

bool EventLog::append(const EventRecord& record) {
  last_ts_ = std::max(last_ts_, record.ts_ms);
  if (degraded_) return false;
  out_ << record.to_line() << '\n';
  out_.flush();
  if (!out_) degraded_ = true;
  return !degraded_;
}

void EventLog::close() {
  if (out_.is_open()) out_.close();
}

}  // namespace powlab
