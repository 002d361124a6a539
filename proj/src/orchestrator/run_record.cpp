#include "powlab/orchestrator/run_record.hpp"

#include <fstream>
#include <sstream>

namespace powlab::orch {

namespace fs = std::filesystem;

json NodeRunStatus::to_json() const {
  return {{"configured", configured},
          {"started", started},
          {"stopped", stopped},
          {"finalized", finalized},
          {"log_collected", log_collected},
          {"log_complete", log_complete},
          {"incomplete", incomplete()},
          {"live_metrics", live_metrics ? live_metrics->to_json() : json(nullptr)},
          {"live_matches_log", live_matches_log ? json(*live_matches_log) : json(nullptr)},
          {"errors", errors}};
}

NodeRunStatus NodeRunStatus::from_json(const json& j) {
  NodeRunStatus s;
  s.configured = j.at("configured");
  s.started = j.at("started");
  s.stopped = j.at("stopped");
  s.finalized = j.at("finalized");
  s.log_collected = j.at("log_collected");
  s.log_complete = j.at("log_complete");
  if (!j.at("live_metrics").is_null()) s.live_metrics = RunMetrics::from_json(j.at("live_metrics"));
  if (!j.at("live_matches_log").is_null()) s.live_matches_log = j.at("live_matches_log").get<bool>();
  s.errors = j.at("errors").get<std::vector<std::string>>();
  return s;
}

std::vector<NodeId> RunRecord::incomplete_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, s] : nodes) {
    if (s.incomplete()) out.push_back(id);
  }
  return out;
}

json RunRecord::to_json() const {
  json n = json::object();
  for (const auto& [id, s] : nodes) n[std::to_string(id)] = s.to_json();
  json l = json::object();
  for (const auto& [id, f] : logs) l[std::to_string(id)] = f;
  return {{"experiment_id", experiment_id},
          {"repetition_index", repetition_index},
          {"run_id", run_id},
          {"started_at_ms", started_at_ms},
          {"ended_at_ms", ended_at_ms},
          {"aborted", aborted},
          {"stopped_early", stopped_early},
          {"abort_reason", abort_reason},
          {"spec", spec.to_json()},
          {"nodes", n},
          {"incomplete_nodes", incomplete_nodes()},
          {"logs", l},
          {"metrics", aggregate.metrics.to_json()},
          {"aggregate", aggregate.to_json()}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.experiment_id = j.at("experiment_id");
  r.repetition_index = j.at("repetition_index");
  r.run_id = j.at("run_id");
  r.started_at_ms = j.at("started_at_ms");
  r.ended_at_ms = j.at("ended_at_ms");
  r.aborted = j.at("aborted");
  r.stopped_early = j.value("stopped_early", false);
  r.abort_reason = j.at("abort_reason");
  auto parsed = parse_spec(j.at("spec"));
  if (!parsed.spec) throw StoreError("stored spec does not parse");
  r.spec = *parsed.spec;
  for (const auto& [k, v] : j.at("nodes").items()) r.nodes[static_cast<NodeId>(std::stoul(k))] = NodeRunStatus::from_json(v);
  for (const auto& [k, v] : j.at("logs").items()) r.logs[static_cast<NodeId>(std::stoul(k))] = v.get<std::string>();
  r.aggregate = Aggregate::from_json(j.at("aggregate"));
  return r;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw StoreError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StoreError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

RunStore::RunStore(fs::path data_dir) : dir_(std::move(data_dir)) { fs::create_directories(dir_); }

fs::path RunStore::run_dir(ExperimentId experiment_id, ExperimentId run_id) const {
  return dir_ / std::to_string(experiment_id) / std::to_string(run_id);
}

void RunStore::save(const RunRecord& record) {
  std::lock_guard lock(mu_);
  auto path = run_dir(record.experiment_id, record.run_id) / "run.json";
  if (fs::exists(path)) throw StoreError("run " + std::to_string(record.run_id) + " already recorded");
  write_file_atomic(path, record.to_json().dump(2) + "\n");
}

std::string RunStore::save_log(ExperimentId experiment_id, ExperimentId run_id, NodeId node,
                               const std::string& content) {
  std::string name = "node-" + std::to_string(node) + ".jsonl";
  write_file_atomic(run_dir(experiment_id, run_id) / name, content);
  return name;
}

void RunStore::save_spec(const ExperimentSpec& spec) {
  write_file_atomic(dir_ / std::to_string(spec.experiment_id) / "spec.json", spec.to_json().dump(2) + "\n");
}

std::optional<fs::path> RunStore::find_run_dir(ExperimentId run_id) const {
  std::error_code ec;
  for (const auto& exp : fs::directory_iterator(dir_, ec)) {
    if (!exp.is_directory() || !is_number(exp.path().filename().string())) continue;
    auto candidate = exp.path() / std::to_string(run_id);
    if (fs::exists(candidate / "run.json", ec)) return candidate;
  }
  return std::nullopt;
}

std::optional<RunRecord> RunStore::load(ExperimentId run_id) const {
  auto dir = find_run_dir(run_id);
  if (!dir) return std::nullopt;
  try {
    return RunRecord::from_json(json::parse(slurp(*dir / "run.json")));
  } catch (const json::exception& e) {
    throw StoreError("corrupt run record " + (*dir / "run.json").string() + ": " + e.what());
  }
}

std::optional<fs::path> RunStore::log_path(ExperimentId run_id, NodeId node) const {
  auto dir = find_run_dir(run_id);
  if (!dir) return std::nullopt;
  auto p = *dir / ("node-" + std::to_string(node) + ".jsonl");
  if (!fs::exists(p)) return std::nullopt;
  return p;
}

std::set<ExperimentId> RunStore::used_run_ids() const {
  std::set<ExperimentId> out;
  std::error_code ec;
  for (const auto& exp : fs::directory_iterator(dir_, ec)) {
    if (!exp.is_directory() || !is_number(exp.path().filename().string())) continue;
    for (const auto& run : fs::directory_iterator(exp.path(), ec)) {
      auto name = run.path().filename().string();
      if (is_number(name) && fs::exists(run.path() / "run.json")) out.insert(static_cast<ExperimentId>(std::stoul(name)));
    }
  }
  return out;
}

std::vector<RunRecord> RunStore::runs_of(ExperimentId experiment_id) const {
  std::vector<RunRecord> out;
  std::error_code ec;
  for (const auto& run : fs::directory_iterator(dir_ / std::to_string(experiment_id), ec)) {
    if (fs::exists(run.path() / "run.json")) out.push_back(RunRecord::from_json(json::parse(slurp(run.path() / "run.json"))));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  return out;
}

Aggregate RunStore::reaggregate(const RunRecord& record) const {
  std::map<NodeId, NodeLog> logs;
  auto dir = run_dir(record.experiment_id, record.run_id);
  for (const auto& [id, name] : record.logs) logs[id] = read_log(dir / name, ReplayMode::lenient);
  return aggregate_logs(record.spec, logs);
}

}  // namespace powlab::orch
