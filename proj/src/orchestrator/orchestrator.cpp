#include "powlab/orchestrator/orchestrator.hpp"

#include <cstdio>
#include <future>
#include <sstream>

#include <httplib.h>

#include "powlab/orchestrator/presets.hpp"

namespace powlab::orch {

std::int64_t wall_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string_view to_string(ExperimentState s) {
  switch (s) {
    case ExperimentState::validated: return "validated";
    case ExperimentState::running: return "running";
    case ExperimentState::completed: return "completed";
    case ExperimentState::aborted: return "aborted";
    case ExperimentState::stopped: return "stopped";
  }
  return "?";
}

namespace {

struct Reply {
  int status = 0;
  std::string body;
  json parsed() const { return json::parse(body, nullptr, false); }
  bool ok() const { return status == 200; }
};

class NodeClient {
 public:
  NodeClient(const std::string& rpc_address, int timeout_s) {
    auto ep = p2p::Endpoint::parse(rpc_address);
    client_ = std::make_unique<httplib::Client>(ep.host.empty() ? "127.0.0.1" : ep.host, ep.port);
    client_->set_connection_timeout(timeout_s, 0);
    client_->set_read_timeout(timeout_s, 0);
    client_->set_write_timeout(timeout_s, 0);
  }

  std::optional<Reply> post(const std::string& path, const json& body) {
    auto r = client_->Post(path, body.dump(), "application/json");
    if (!r) return std::nullopt;
    return Reply{r->status, r->body};
  }

  std::optional<Reply> get(const std::string& path) {
    auto r = client_->Get(path);
    if (!r) return std::nullopt;
    return Reply{r->status, r->body};
  }

 private:
  std::unique_ptr<httplib::Client> client_;
};

std::string describe(const std::optional<Reply>& r) {
  if (!r) return "no response";
  auto j = r->parsed();
  std::string msg = j.is_object() && j.contains("error") && j["error"].is_string() ? j["error"].get<std::string>()
                                                                                    : r->body;
  return "HTTP " + std::to_string(r->status) + ": " + msg;
}

/// Runs `fn(id)` for every id concurrently and collects the results.
template <class Fn>
auto fan_out(const std::vector<NodeId>& ids, Fn fn) {
  using R = decltype(fn(NodeId{}));
  std::map<NodeId, std::future<R>> pending;
  for (NodeId id : ids) pending.emplace(id, std::async(std::launch::async, fn, id));
  std::map<NodeId, R> out;
  for (auto& [id, f] : pending) out.emplace(id, f.get());
  return out;
}

json slice_json(const ExperimentSpec& spec, ExperimentId run_id, NodeId id,
                const std::map<NodeId, RegisteredNode>& addrs) {
  const auto& p = spec.nodes.at(id);
  json peers = json::array();
  for (NodeId peer : spec.topology.peers_of(id)) {
    peers.push_back({{"node_id", peer}, {"p2p_address", addrs.at(peer).identity.p2p_address}});
  }
  return {{"experiment_id", spec.experiment_id},
          {"run_id", run_id},
          {"node_id", id},
          {"color", p.color},
          {"difficulty", spec.difficulty},
          {"worker_count", p.worker_count},
          {"attempts_per_sec_per_worker", p.attempts_per_sec_per_worker},
          {"outbound_delay_ms", p.outbound_delay_ms},
          {"peers", peers}};
}

}  // namespace

json Orchestrator::Submission::to_json() const {
  json v = json::array();
  for (const auto& x : violations) v.push_back(x.to_json());
  json j = {{"ok", violations.empty()}, {"violations", v}};
  if (spec) j["experiment_id"] = spec->experiment_id;
  return j;
}

Orchestrator::Orchestrator(OrchestratorOptions opts) : opts_(std::move(opts)), store_(opts_.data_dir) {}

Orchestrator::~Orchestrator() {
  cancel_ = true;
  cv_.notify_all();
  if (runner_.joinable()) runner_.join();
}

Orchestrator::Submission Orchestrator::submit(const json& spec_json) {
  Submission out;
  auto parsed = parse_spec(spec_json);
  if (!parsed.spec) {
    out.violations = std::move(parsed.violations);
    return out;
  }
  out.violations = validate_spec(*parsed.spec, registry_.availability(wall_ms()), store_.used_run_ids());
  std::lock_guard lock(mu_);
  auto it = experiments_.find(parsed.spec->experiment_id);
  if (it != experiments_.end() && it->second.state == ExperimentState::running) {
    out.violations.push_back({"experiment_id", "experiment is running"});
  }
  if (!out.violations.empty()) return out;
  out.spec = parsed.spec;
  Experiment e;
  e.spec = *out.spec;
  experiments_[out.spec->experiment_id] = std::move(e);
  for (const auto& [id, p] : out.spec->nodes) colors_[id] = p.color;
  return out;
}

void Orchestrator::start(ExperimentId id) {
  std::unique_lock lock(mu_);
  auto it = experiments_.find(id);
  if (it == experiments_.end()) throw ApiError(404, "unknown experiment " + std::to_string(id));
  if (active_) throw ApiError(409, "experiment " + std::to_string(*active_) + " is running");
  if (it->second.state != ExperimentState::validated) {
    throw ApiError(409, "experiment already ran; submit it again under a new experiment_id");
  }
  auto spec = it->second.spec;
  lock.unlock();
  // The registry may have changed since submission.
  auto v = validate_spec(spec, registry_.availability(wall_ms()), store_.used_run_ids());
  if (!v.empty()) throw ApiError(422, v.front().field + ": " + v.front().reason);
  lock.lock();
  if (active_) throw ApiError(409, "experiment " + std::to_string(*active_) + " is running");
  if (runner_.joinable()) runner_.join();  // previous runner has finished
  active_ = id;
  it->second.state = ExperimentState::running;
  cancel_ = false;
  store_.save_spec(spec);
  runner_ = std::thread([this, id] { run_all(id); });
}

void Orchestrator::stop(ExperimentId id) {
  std::lock_guard lock(mu_);
  if (!experiments_.contains(id)) throw ApiError(404, "unknown experiment " + std::to_string(id));
  if (active_ != id) return;
  cancel_ = true;
  cv_.notify_all();
}

ExperimentState Orchestrator::state(ExperimentId id) const {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(id);
  if (it == experiments_.end()) throw ApiError(404, "unknown experiment " + std::to_string(id));
  return it->second.state;
}

bool Orchestrator::wait(ExperimentId id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] {
    auto it = experiments_.find(id);
    return it == experiments_.end() || it->second.state != ExperimentState::running;
  });
}

std::vector<RunRecord> Orchestrator::runs(ExperimentId id) const {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(id);
  if (it != experiments_.end()) return it->second.runs;
  return store_.runs_of(id);
}

json Orchestrator::experiment_json(ExperimentId id) const {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(id);
  if (it == experiments_.end()) throw ApiError(404, "unknown experiment " + std::to_string(id));
  const auto& e = it->second;
  json progress = nullptr;
  if (e.progress) {
    progress = {{"run_id", e.progress->run_id},
                {"repetition_index", e.progress->repetition_index},
                {"phase", e.progress->phase},
                {"start_at_ms", e.progress->start_at_ms},
                {"ends_at_ms", e.progress->ends_at_ms},
                {"now_ms", wall_ms()}};
  }
  return {{"experiment_id", id},
          {"state", to_string(e.state)},
          {"spec", e.spec.to_json()},
          {"repetitions", e.spec.repetitions},
          {"runs_completed", e.runs.size()},
          {"progress", progress},
          {"error", e.error}};
}

json Orchestrator::runs_json(ExperimentId id) const {
  std::unique_lock lock(mu_);
  auto it = experiments_.find(id);
  std::vector<RunRecord> records;
  std::string state = "completed";
  if (it != experiments_.end()) {
    records = it->second.runs;
    state = to_string(it->second.state);
  } else {
    lock.unlock();
    records = store_.runs_of(id);
    if (records.empty()) throw ApiError(404, "unknown experiment " + std::to_string(id));
  }
  json runs = json::array();
  for (const auto& r : records) runs.push_back(r.to_json());
  return {{"experiment_id", id}, {"state", state}, {"runs", runs}};
}

json Orchestrator::nodes_json() const {
  auto nodes = registry_.list(wall_ms());
  std::lock_guard lock(mu_);
  json out = json::array();
  std::size_t i = 0;
  for (const auto& n : nodes) {
    auto j = n.to_json();
    auto c = colors_.find(n.identity.node_id);
    j["color"] = c != colors_.end() ? c->second : palette()[i % palette().size()];
    out.push_back(j);
    ++i;
  }
  return out;
}

void Orchestrator::set_progress(ExperimentId id, std::optional<Progress> p) {
  std::lock_guard lock(mu_);
  experiments_[id].progress = std::move(p);
}

bool Orchestrator::sleep_until(std::int64_t until, const std::atomic<bool>& cancel) {
  std::unique_lock lock(mu_);
  while (!cancel) {
    auto left = until - wall_ms();
    if (left <= 0) return true;
    cv_.wait_for(lock, std::chrono::milliseconds(std::min<std::int64_t>(left, 200)));
  }
  return false;
}

void Orchestrator::run_all(ExperimentId id) {
  ExperimentSpec spec;
  {
    std::lock_guard lock(mu_);
    spec = experiments_.at(id).spec;
  }
  auto final_state = ExperimentState::completed;
  std::string error;
  for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
    RunRecord rec;
    try {
      rec = run_once(spec, rep, cancel_);
    } catch (const std::exception& e) {
      rec.aborted = true;
      rec.abort_reason = e.what();
      rec.run_id = spec.run_id(rep);
      rec.experiment_id = spec.experiment_id;
      rec.repetition_index = rep;
    }
    {
      std::lock_guard lock(mu_);
      experiments_[id].runs.push_back(rec);
    }
    if (rec.aborted) {
      final_state = ExperimentState::aborted;
      error = "run " + std::to_string(rec.run_id) + " aborted: " + rec.abort_reason;
      std::fprintf(stderr, "orchestrator: %s\n", error.c_str());
      break;
    }
    if (cancel_) {
      final_state = ExperimentState::stopped;
      break;
    }
  }
  std::lock_guard lock(mu_);
  auto& e = experiments_[id];
  e.state = final_state;
  e.error = error;
  e.progress.reset();
  active_.reset();
  cv_.notify_all();
}

RunRecord Orchestrator::run_once(const ExperimentSpec& spec, std::uint32_t rep, const std::atomic<bool>& cancel) {
  RunRecord rec;
  rec.experiment_id = spec.experiment_id;
  rec.repetition_index = rep;
  rec.run_id = spec.run_id(rep);
  rec.spec = spec;
  std::vector<NodeId> ids;
  for (const auto& [id, p] : spec.nodes) {
    ids.push_back(id);
    rec.nodes[id];
  }
  auto abort = [&](const std::string& why) {
    rec.aborted = true;
    rec.abort_reason = why;
    return rec;
  };
  Progress progress{rec.run_id, rep, "configuring", 0, 0};
  set_progress(spec.experiment_id, progress);

  std::map<NodeId, RegisteredNode> addrs;
  for (NodeId id : ids) {
    auto n = registry_.get(id, wall_ms());
    if (!n) return abort("node " + std::to_string(id) + " is not registered");
    if (!n->reachable) return abort("node " + std::to_string(id) + " is unreachable");
    addrs[id] = *n;
  }
  auto client = [&](NodeId id) { return NodeClient(addrs.at(id).identity.rpc_address, opts_.node_timeout_s); };

  // Configure every node; any refusal aborts before mining starts.
  auto applied = fan_out(ids, [&](NodeId id) { return client(id).post("/control/apply", slice_json(spec, rec.run_id, id, addrs)); });
  std::vector<std::string> refusals;
  for (auto& [id, r] : applied) {
    if (!r || !r->ok()) {
      rec.nodes[id].errors.push_back("apply: " + describe(r));
      refusals.push_back("node " + std::to_string(id) + " (" + describe(r) + ")");
    }
  }
  if (!refusals.empty()) {
    std::string why = "configuration failed:";
    for (const auto& r : refusals) why += " " + r;
    return abort(why);
  }
  auto deadline = wall_ms() + opts_.configure_timeout_ms;
  while (true) {
    auto st = fan_out(ids, [&](NodeId id) { return client(id).get("/control/status"); });
    bool all = true;
    for (auto& [id, r] : st) {
      auto j = r ? r->parsed() : json();
      bool ok = j.is_object() && j.value("phase", "") == "configured" && j.value("run_id", 0u) == rec.run_id;
      rec.nodes[id].configured = ok;
      all = all && ok;
    }
    if (all) break;
    if (wall_ms() > deadline) return abort("nodes did not report configured within the timeout");
    if (cancel) return abort("stopped before start");
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }

  // Shared start instant.
  auto start_at = wall_ms() + opts_.start_lead_ms;
  auto started = fan_out(ids, [&](NodeId id) { return client(id).post("/control/start", {{"start_at_ms", start_at}}); });
  for (auto& [id, r] : started) {
    rec.nodes[id].started = r && r->ok();
    if (!rec.nodes[id].started) rec.nodes[id].errors.push_back("start: " + describe(r));
  }
  rec.started_at_ms = start_at;
  progress.phase = "running";
  progress.start_at_ms = start_at;
  progress.ends_at_ms = start_at + static_cast<std::int64_t>(spec.duration_s) * 1000;
  set_progress(spec.experiment_id, progress);

  if (!sleep_until(progress.ends_at_ms, cancel)) rec.stopped_early = true;

  // Stop mining everywhere; nodes keep relaying for the settle window.
  auto stopped = fan_out(ids, [&](NodeId id) {
    return client(id).post("/control/stop", {{"settle_ms", opts_.settle_ms}});
  });
  for (auto& [id, r] : stopped) {
    rec.nodes[id].stopped = r && r->ok();
    if (!rec.nodes[id].stopped) rec.nodes[id].errors.push_back("stop: " + describe(r));
  }
  rec.ended_at_ms = wall_ms();
  progress.phase = "settling";
  set_progress(spec.experiment_id, progress);

  deadline = wall_ms() + static_cast<std::int64_t>(opts_.settle_ms) + 10000;
  std::vector<NodeId> waiting;
  for (NodeId id : ids) {
    if (rec.nodes[id].stopped) waiting.push_back(id);
  }
  while (!waiting.empty() && wall_ms() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    auto st = fan_out(waiting, [&](NodeId id) { return client(id).get("/control/status"); });
    std::vector<NodeId> still;
    for (auto& [id, r] : st) {
      auto j = r ? r->parsed() : json();
      if (j.is_object() && j.value("run_finalized", false) && j.value("run_id", 0u) == rec.run_id) {
        rec.nodes[id].finalized = true;
      } else {
        still.push_back(id);
      }
    }
    waiting = std::move(still);
  }
  for (NodeId id : waiting) rec.nodes[id].errors.push_back("did not finalize within the settle window");

  // Collect logs and live metrics in parallel.
  progress.phase = "collecting";
  set_progress(spec.experiment_id, progress);
  struct Collected {
    std::optional<Reply> log;
    std::optional<Reply> metrics;
  };
  auto collected = fan_out(ids, [&](NodeId id) {
    Collected c;
    auto cl = client(id);
    c.log = cl.get("/control/log?run=" + std::to_string(rec.run_id));
    c.metrics = cl.post("/", {{"jsonrpc", "2.0"}, {"id", 1}, {"method", "powlab_getMetrics"}});
    return c;
  });
  std::map<NodeId, NodeLog> logs;
  for (auto& [id, c] : collected) {
    auto& st = rec.nodes[id];
    if (c.log && c.log->ok()) {
      rec.logs[id] = store_.save_log(spec.experiment_id, rec.run_id, id, c.log->body);
      std::istringstream in(c.log->body);
      std::vector<std::string> warnings;
      logs[id] = parse_log(in, "node-" + std::to_string(id) + ".jsonl", ReplayMode::lenient, &warnings);
      for (const auto& w : warnings) st.errors.push_back("log: " + w);
      st.log_collected = true;
      st.log_complete = !logs[id].records.empty() && logs[id].records.back().kind == EventKind::run_stop;
    } else {
      st.errors.push_back("log: " + describe(c.log));
    }
    if (c.metrics && c.metrics->ok()) {
      auto j = c.metrics->parsed();
      if (j.is_object() && j.contains("result")) st.live_metrics = RunMetrics::from_json(j["result"]);
    }
  }

  rec.aggregate = aggregate_logs(spec, logs);
  for (auto& [id, st] : rec.nodes) {
    auto it = rec.aggregate.per_node.find(id);
    if (st.live_metrics && it != rec.aggregate.per_node.end() && st.finalized) {
      st.live_matches_log = *st.live_metrics == it->second;
    }
  }
  store_.save(rec);
  set_progress(spec.experiment_id, std::nullopt);
  return rec;
}

}  // namespace powlab::orch
