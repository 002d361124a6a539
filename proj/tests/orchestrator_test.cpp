#include "powlab/orchestrator/orchestrator.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include <httplib.h>

#include "powlab/metrics/json_codec.hpp"
#include "powlab/node/node.hpp"
#include "powlab/orchestrator/presets.hpp"
#include "test_support.hpp"

namespace powlab::orch {
namespace {

using namespace std::chrono_literals;
using test::child_of;
using test::TempDir;
using test::wait_until;

bool has_violation(const std::vector<Violation>& vs, const std::string& field, const std::string& fragment) {
  for (const auto& v : vs) {
    if (v.field == field && v.reason.find(fragment) != std::string::npos) return true;
  }
  return false;
}

std::map<NodeId, NodeAvailability> all_up(const ExperimentSpec& s) {
  std::map<NodeId, NodeAvailability> m;
  for (NodeId id : s.node_ids()) m[id] = {true, true};
  return m;
}

// ---- presets ----

TEST(Presets, MajorityGivesAttackerOverHalf) {
  auto s = scenario_preset("majority-51", {5, 4, 3, 2, 1}, {});
  EXPECT_EQ(s.nodes.at(1).worker_count, 5u);
  std::uint64_t total = 0;
  for (NodeId id : s.node_ids()) total += s.hashrate(id);
  EXPECT_GT(static_cast<double>(s.hashrate(1)) / static_cast<double>(total), 0.5);
  for (NodeId id = 2; id <= 5; ++id) EXPECT_EQ(s.nodes.at(id).worker_count, 1u);
  EXPECT_EQ(s.topology.links().size(), 10u);
  EXPECT_TRUE(check_spec(s).empty());

  PresetParams p;
  p.attacker = 3;
  p.worker_count = 2;
  auto t = scenario_preset("majority-51", {1, 2, 3}, p);
  EXPECT_EQ(t.nodes.at(3).worker_count, majority_workers(4));
  EXPECT_GT(t.hashrate(3) * 2, t.hashrate(1) + t.hashrate(2) + t.hashrate(3));
}

TEST(Presets, EclipseIsolatesVictim) {
  auto s = scenario_preset("eclipse", {1, 2, 3, 4}, {});
  EXPECT_TRUE(s.topology.peers_of(4).empty());
  EXPECT_EQ(s.topology.peers_of(1), (std::vector<NodeId>{2, 3}));
  EXPECT_TRUE(check_spec(s).empty());

  PresetParams p;
  p.victim = 1;
  p.attacker = 2;
  auto t = scenario_preset("eclipse", {1, 2, 3, 4}, p);
  EXPECT_EQ(t.topology.peers_of(1), (std::vector<NodeId>{2}));
  EXPECT_EQ(t.topology.peers_of(2), (std::vector<NodeId>{1}));
  EXPECT_EQ(t.topology.peers_of(3), (std::vector<NodeId>{4}));
}

TEST(Presets, TwoIslandsAreDisjointTriples) {
  auto s = scenario_preset("two-islands", {1, 2, 3, 4, 5, 6}, {});
  auto comps = s.topology.components(s.node_ids());
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0], (std::set<NodeId>{1, 2, 3}));
  EXPECT_EQ(comps[1], (std::set<NodeId>{4, 5, 6}));
  EXPECT_EQ(s.topology.links().size(), 6u);
}

TEST(Presets, RingStarAndMesh) {
  auto ring = scenario_preset("ring", {1, 2, 3, 4}, {});
  for (NodeId id : ring.node_ids()) EXPECT_EQ(ring.topology.peers_of(id).size(), 2u);
  auto star = scenario_preset("star", {7, 8, 9}, {});
  EXPECT_EQ(star.topology.peers_of(7), (std::vector<NodeId>{8, 9}));
  EXPECT_EQ(star.topology.peers_of(8), (std::vector<NodeId>{7}));
  auto mesh = scenario_preset("fully-connected", {1, 2, 3}, {});
  EXPECT_EQ(mesh.topology.links().size(), 3u);
  // Colors come from the palette in id order and stay distinct.
  EXPECT_EQ(mesh.nodes.at(1).color, palette()[0]);
  EXPECT_EQ(mesh.nodes.at(3).color, palette()[2]);
}

TEST(Presets, RejectsBadInput) {
  EXPECT_THROW(scenario_preset("ring", {1, 2}, {}), std::invalid_argument);
  EXPECT_THROW(scenario_preset("eclipse", {1, 2}, {}), std::invalid_argument);
  EXPECT_THROW(scenario_preset("fully-connected", {1}, {}), std::invalid_argument);
  EXPECT_THROW(scenario_preset("moebius", {1, 2, 3}, {}), std::invalid_argument);
  EXPECT_THROW(scenario_preset("star", {1, 1, 2}, {}), std::invalid_argument);
  PresetParams p;
  p.victim = 9;
  EXPECT_THROW(scenario_preset("eclipse", {1, 2, 3}, p), std::invalid_argument);
}

// ---- spec validation ----

TEST(SpecValidation, RingOfRegisteredNodesPasses) {
  auto s = scenario_preset("ring", {1, 2, 3}, {});
  EXPECT_TRUE(validate_spec(s, all_up(s), {}).empty());
}

TEST(SpecValidation, UnknownAndUnreachableNodes) {
  auto s = scenario_preset("fully-connected", {1, 2, 3}, {});
  auto avail = all_up(s);
  avail.erase(3);
  avail[2].reachable = false;
  auto v = validate_spec(s, avail, {});
  EXPECT_TRUE(has_violation(v, "nodes.3", "not registered")) << json(v.size());
  EXPECT_TRUE(has_violation(v, "nodes.2", "unreachable"));
}

TEST(SpecValidation, StructuralProblems) {
  auto s = scenario_preset("fully-connected", {1, 2, 3}, {});
  for (auto& [id, p] : s.nodes) p.worker_count = 0;
  EXPECT_TRUE(has_violation(check_spec(s), "nodes", "no miners"));

  s = scenario_preset("fully-connected", {1, 2, 3}, {});
  s.nodes.at(2).color = "#E6194B";  // same as node 1, different case
  EXPECT_TRUE(has_violation(check_spec(s), "nodes.2.color", "duplicate"));

  s = scenario_preset("fully-connected", {1, 2, 3}, {});
  s.topology.adjacency[1].push_back(1);
  s.topology.adjacency[2].push_back(8);
  auto v = check_spec(s);
  EXPECT_TRUE(has_violation(v, "topology.adjacency.1", "self-loop"));
  EXPECT_TRUE(has_violation(v, "topology.adjacency.2", "unknown node 8"));

  s = scenario_preset("fully-connected", {1, 2, 3}, {});
  s.duration_s = 4;
  EXPECT_TRUE(has_violation(check_spec(s), "duration_s", ""));
  s.duration_s = 5;
  EXPECT_TRUE(check_spec(s).empty());
}

TEST(SpecValidation, RecordedRunIdsAreNotReused) {
  PresetParams p;
  p.experiment_id = 100;
  p.repetitions = 3;
  auto s = scenario_preset("fully-connected", {1, 2}, p);
  EXPECT_TRUE(has_violation(validate_spec(s, all_up(s), {102}), "experiment_id", "102"));
  EXPECT_TRUE(validate_spec(s, all_up(s), {99, 103}).empty());
}

TEST(SpecValidation, ParseReportsFields) {
  auto parsed = parse_spec(json{{"experiment_id", -1}, {"nodes", {{"x", json::object()}}}});
  EXPECT_FALSE(parsed.spec);
  EXPECT_FALSE(parsed.violations.empty());
  EXPECT_TRUE(has_violation(parsed.violations, "experiment_id", ""));

  auto s = scenario_preset("star", {1, 2, 3}, {});
  auto round = parse_spec(s.to_json());
  ASSERT_TRUE(round.spec) << round.violations.size();
  EXPECT_EQ(*round.spec, s);
}

// ---- registry ----

Announcement ann(NodeId id, int port) {
  return {id, "127.0.0.1:" + std::to_string(port), "127.0.0.1:" + std::to_string(port + 1)};
}

TEST(Registry, ReannounceIsIdempotent) {
  Registry r;
  EXPECT_EQ(r.announce(ann(1, 9000), 0), Registry::Result::ok);
  EXPECT_EQ(r.announce(ann(1, 9000), 10), Registry::Result::ok);
  EXPECT_EQ(r.list(10).size(), 1u);
  EXPECT_EQ(r.get(1, 10)->last_seen_ms, 10);
}

TEST(Registry, ConflictWhileAliveTakeoverAfterSilence) {
  Registry r;
  r.announce(ann(1, 9000), 0);
  EXPECT_EQ(r.announce(ann(1, 9100), 1000), Registry::Result::conflict);
  EXPECT_EQ(r.get(1, 1000)->identity.p2p_address, "127.0.0.1:9000");
  EXPECT_FALSE(r.get(1, Registry::kUnreachableMs + 1)->reachable);
  EXPECT_EQ(r.announce(ann(1, 9100), Registry::kUnreachableMs + 1), Registry::Result::ok);
  EXPECT_EQ(r.get(1, Registry::kUnreachableMs + 1)->identity.p2p_address, "127.0.0.1:9100");
}

TEST(Registry, HeartbeatFromUnknownNode) {
  Registry r;
  EXPECT_EQ(r.heartbeat(ann(4, 9000), 0), Registry::Result::unknown);
  r.announce(ann(4, 9000), 0);
  EXPECT_EQ(r.heartbeat(ann(4, 9000), 14000), Registry::Result::ok);
  EXPECT_TRUE(r.get(4, 28000)->reachable);
  EXPECT_THROW(Announcement::from_json(json{{"node_id", 1}, {"p2p_address", "nope"}, {"rpc_address", "x:1"}}),
               std::invalid_argument);
}

// ---- aggregation ----

struct LogBuilder {
  NodeId node;
  ExperimentId run;
  std::vector<EventRecord> recs;

  LogBuilder(NodeId n, ExperimentId r) : node(n), run(r) {
    recs.push_back({0, n, EventKind::run_start, json{{"run_id", r}, {"experiment_id", r}}});
  }
  LogBuilder& mined(std::int64_t ts, const Block& b) {
    recs.push_back({ts, node, EventKind::mined, json{{"block", block_to_json(b)}}});
    return *this;
  }
  LogBuilder& got(std::int64_t ts, const Block& b, NodeId from) {
    recs.push_back({ts, node, EventKind::received, json{{"block", block_to_json(b)}, {"from", from}}});
    return *this;
  }
  NodeLog stop(std::int64_t stopped, std::int64_t last) {
    recs.push_back({last, node, EventKind::run_stop, json{{"mining_stopped_ts_ms", stopped}}});
    return {"node-" + std::to_string(node) + ".jsonl", recs};
  }
};

ExperimentSpec spec_of(std::set<NodeId> ids, ExperimentId run) {
  ExperimentSpec s;
  s.experiment_id = run;
  for (NodeId id : ids) {
    s.nodes[id] = NodeParams{};
    s.topology.adjacency[id];
  }
  for (NodeId a : ids) {
    for (NodeId b : ids) {
      if (a < b) s.topology.adjacency[a].push_back(b);
    }
  }
  return s;
}

TEST(Aggregate, CanonicalSharesFromReferenceNode) {
  auto g = make_genesis(9);
  auto a1 = child_of(g, 1, 1, 1);
  auto b1 = child_of(a1, 1, 2, 2);
  auto a2 = child_of(b1, 1, 1, 3);
  auto n1 = LogBuilder(1, 9).mined(1000, a1).got(2100, b1, 2).mined(3000, a2).stop(5000, 8000);
  auto n2 = LogBuilder(2, 9).got(1100, a1, 1).mined(2000, b1).got(3100, a2, 1).stop(5000, 8000);
  auto agg = aggregate_logs(spec_of({1, 2}, 9), {{1, n1}, {2, n2}});
  EXPECT_EQ(agg.reference, NodeId{1});
  EXPECT_EQ(agg.metrics.total_canonical, 3u);
  EXPECT_DOUBLE_EQ(agg.metrics.contribution_pct(1), 66.7);
  EXPECT_DOUBLE_EQ(agg.metrics.contribution_pct(2), 33.3);
  EXPECT_EQ(agg.metrics.leader, NodeId{1});
  // Heads were equal before mining stopped and stayed so.
  EXPECT_EQ(agg.mining_stopped_ts_ms, 5000);
  EXPECT_EQ(agg.convergence_time_ms, 0);
  ASSERT_EQ(agg.agreement.size(), 9u);
  EXPECT_DOUBLE_EQ(agg.agreement[0].fraction, 1.0);
  EXPECT_DOUBLE_EQ(agg.agreement[1].fraction, 0.5);  // a1 reaches node 2 at 1100
  EXPECT_DOUBLE_EQ(agg.agreement[2].fraction, 0.5);  // b1 not yet at node 1
  EXPECT_DOUBLE_EQ(agg.agreement[4].fraction, 1.0);
}

TEST(Aggregate, ForkResolvedAfterStop) {
  auto g = make_genesis(3);
  auto b1 = child_of(g, 1, 1, 1);
  auto b2 = child_of(b1, 1, 2, 2);
  auto b3 = child_of(b1, 1, 3, 3);
  auto b4 = child_of(b3, 1, 3, 4);
  auto n1 = LogBuilder(1, 3).mined(100, b1).got(900, b2, 2).got(900, b3, 3).got(6400, b4, 3).stop(6000, 9000);
  auto n3 = LogBuilder(3, 3).got(150, b1, 1).mined(800, b3).got(950, b2, 1).mined(5900, b4).stop(6000, 9000);
  auto agg = aggregate_logs(spec_of({1, 3}, 3), {{1, n1}, {3, n3}});
  EXPECT_EQ(agg.metrics.uncle_count, 1u);
  EXPECT_DOUBLE_EQ(agg.metrics.uncle_rate, 0.25);
  EXPECT_EQ(agg.convergence_time_ms, 400);
  EXPECT_TRUE(agg.converged());
}

TEST(Aggregate, NeverConvergedIsNull) {
  auto g = make_genesis(4);
  auto a = child_of(g, 1, 1, 1);
  auto b = child_of(g, 1, 2, 2);
  auto n1 = LogBuilder(1, 4).mined(100, a).stop(1000, 4000);
  auto n2 = LogBuilder(2, 4).mined(120, b).stop(1000, 4000);
  auto agg = aggregate_logs(spec_of({1, 2}, 4), {{1, n1}, {2, n2}});
  EXPECT_FALSE(agg.converged());
  EXPECT_FALSE(agg.convergence_time_ms);
}

TEST(Aggregate, ConvergedAtFindsStableSuffix) {
  auto g = make_genesis(6);
  auto a = child_of(g, 1, 1, 1);
  auto b = child_of(g, 1, 2, 2);
  auto c = child_of(a, 1, 1, 3);
  auto r1 = replay_node(LogBuilder(1, 6).mined(10, a).mined(50, c).stop(60, 200));
  auto r2 = replay_node(LogBuilder(2, 6).mined(10, b).got(40, a, 1).got(120, c, 1).stop(60, 200));
  std::vector<const NodeReplay*> both{&r1, &r2};
  EXPECT_EQ(converged_at(both, 60, 200), 120);
  EXPECT_EQ(converged_at(both, 130, 200), 130);
  EXPECT_FALSE(converged_at(both, 0, 100));
  EXPECT_FALSE(converged_at({}, 0, 100));
}

TEST(Aggregate, CutOffNodeIsExcluded) {
  auto g = make_genesis(8);
  auto a = child_of(g, 1, 1, 1);
  auto v = child_of(g, 1, 3, 2);
  auto n1 = LogBuilder(1, 8).mined(100, a).stop(3000, 5000);
  auto n2 = LogBuilder(2, 8).got(150, a, 1).stop(3000, 5000);
  auto n3 = LogBuilder(3, 8).mined(100, v).stop(3000, 5000);
  auto s = scenario_preset("eclipse", {1, 2, 3}, {});
  s.experiment_id = 8;
  auto agg = aggregate_logs(s, {{1, n1}, {2, n2}, {3, n3}});
  EXPECT_EQ(agg.considered, (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(agg.excluded, (std::vector<NodeId>{3}));
  EXPECT_TRUE(agg.converged());
  EXPECT_EQ(agg.per_node.at(3).head_height, 1u);
  EXPECT_EQ(agg.per_node.at(3).leader, NodeId{3});
}

TEST(Aggregate, ReferenceChoice) {
  auto s = spec_of({1, 2, 3}, 1);
  s.nodes.at(1).worker_count = 0;
  EXPECT_EQ(choose_reference(s, {1, 2, 3}), NodeId{2});
  s.reference_node = 3;
  EXPECT_EQ(choose_reference(s, {1, 2, 3}), NodeId{3});
  EXPECT_EQ(choose_reference(s, {1, 2}), NodeId{2});
  EXPECT_FALSE(choose_reference(s, {}));
}

// ---- run records ----

TEST(RunStore, RecordRoundTripAndReaggregation) {
  TempDir dir;
  RunStore store(dir.path());
  auto g = make_genesis(21);
  auto a = child_of(g, 1, 1, 1);
  auto n1 = LogBuilder(1, 21).mined(100, a).stop(1000, 2000);
  auto n2 = LogBuilder(2, 21).got(140, a, 1).stop(1000, 2000);

  RunRecord rec;
  rec.experiment_id = 20;
  rec.repetition_index = 1;
  rec.run_id = 21;
  rec.started_at_ms = 1000;
  rec.ended_at_ms = 7000;
  rec.spec = spec_of({1, 2}, 20);
  rec.spec.repetitions = 2;
  rec.nodes[1].log_collected = rec.nodes[1].log_complete = true;
  rec.nodes[2].errors = {"log: timeout"};
  std::string body1;
  for (const auto& r : n1.records) body1 += r.to_line() + "\n";
  rec.logs[1] = store.save_log(20, 21, 1, body1);
  rec.aggregate = aggregate_logs(rec.spec, {{1, n1}});
  store.save(rec);
  EXPECT_THROW(store.save(rec), StoreError);

  EXPECT_EQ(RunRecord::from_json(rec.to_json()), rec);
  auto loaded = store.load(21);
  ASSERT_TRUE(loaded);
  EXPECT_EQ(*loaded, rec);
  EXPECT_EQ(loaded->incomplete_nodes(), (std::vector<NodeId>{2}));
  EXPECT_EQ(store.reaggregate(*loaded), rec.aggregate);
  EXPECT_EQ(store.reaggregate(*loaded), store.reaggregate(*loaded));
  EXPECT_EQ(store.used_run_ids(), (std::set<ExperimentId>{21}));
  EXPECT_EQ(store.runs_of(20).size(), 1u);
  EXPECT_FALSE(store.load(22));
  (void)n2;
}

// ---- orchestrator over HTTP with in-process nodes ----

struct Lab {
  TempDir orch_dir;
  TempDir node_dir;
  Orchestrator orch;
  ApiServer api;
  std::map<NodeId, std::unique_ptr<node::Node>> nodes;

  explicit Lab(std::set<NodeId> ids, std::optional<std::filesystem::path> ui = {})
      : orch(options(orch_dir.path())), api(orch, p2p::Endpoint{"127.0.0.1", 0}, std::move(ui)) {
    for (NodeId id : ids) {
      node::NodeOptions o;
      o.node_id = id;
      o.p2p_listen = {"127.0.0.1", 0};
      o.rpc_listen = {"127.0.0.1", 0};
      o.data_dir = node_dir.path();
      o.orchestrator_url = url();
      o.heartbeat_ms = 500;
      nodes[id] = std::make_unique<node::Node>(o);
    }
  }

  static OrchestratorOptions options(const std::filesystem::path& dir) {
    OrchestratorOptions o;
    o.data_dir = dir;
    o.start_lead_ms = 800;
    o.settle_ms = 1500;
    o.node_timeout_s = 3;
    return o;
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(api.port()); }
  httplib::Client client() const {
    httplib::Client c(url());
    c.set_read_timeout(10, 0);
    return c;
  }
  bool all_registered() const { return orch.nodes_json().size() == nodes.size(); }
};

json body_of(const httplib::Result& r) { return r ? json::parse(r->body) : json(); }

TEST(OrchestratorHttp, UnknownNodeIsRejected) {
  Lab lab({1, 2});
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  auto s = scenario_preset("fully-connected", {1, 2, 3}, {});
  auto c = lab.client();
  auto r = c.Post("/api/experiments", s.to_json().dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 422);
  auto j = body_of(r);
  EXPECT_FALSE(j["ok"].get<bool>());
  EXPECT_EQ(j["violations"][0]["field"], "nodes.3");

  auto bad = c.Post("/api/experiments", "{nope", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(c.Post("/api/experiments/777/start", "", "application/json")->status, 404);
}

TEST(OrchestratorHttp, PresetsAndNodesAndUi) {
  TempDir ui;
  std::filesystem::create_directories(ui.path());
  std::ofstream(ui.path() / "index.html") << "<html>powlab</html>";
  Lab lab({1, 2, 3}, ui.path());
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  auto c = lab.client();

  auto names = body_of(c.Get("/api/presets"));
  EXPECT_EQ(names.size(), 6u);
  auto ring = body_of(c.Get("/api/presets/ring?duration_s=7&difficulty=42"));
  auto parsed = parse_spec(ring);
  ASSERT_TRUE(parsed.spec);
  EXPECT_EQ(parsed.spec->node_ids(), (std::set<NodeId>{1, 2, 3}));
  EXPECT_EQ(parsed.spec->duration_s, 7u);
  EXPECT_EQ(parsed.spec->difficulty, 42u);
  EXPECT_EQ(c.Get("/api/presets/ring?nodes=1,2")->status, 400);
  EXPECT_EQ(c.Get("/api/presets/eclipse?nodes=1,2,3,4&victim=2")->status, 200);

  auto nodes = body_of(c.Get("/api/nodes"));
  ASSERT_EQ(nodes.size(), 3u);
  EXPECT_EQ(nodes[0]["node_id"], 1);
  EXPECT_TRUE(nodes[0]["reachable"].get<bool>());
  EXPECT_EQ(nodes[0]["rpc_address"], lab.nodes.at(1)->rpc_address());

  auto page = c.Get("/ui/index.html");
  ASSERT_TRUE(page);
  EXPECT_EQ(page->status, 200);
  EXPECT_EQ(page->body, "<html>powlab</html>");
  auto root = c.Get("/");
  ASSERT_TRUE(root);
  EXPECT_EQ(root->status, 302);

  auto hb = c.Post("/api/nodes/heartbeat", json{{"node_id", 42}, {"p2p_address", "127.0.0.1:1"}, {"rpc_address", "127.0.0.1:2"}}.dump(),
                   "application/json");
  ASSERT_TRUE(hb);
  EXPECT_EQ(hb->status, 404);
}

TEST(OrchestratorHttp, TwoRepetitionsEndToEnd) {
  Lab lab({1, 2, 3});
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  PresetParams p;
  p.experiment_id = 500;
  p.duration_s = 5;
  p.repetitions = 2;
  p.difficulty = 4000;
  auto spec = scenario_preset("fully-connected", {1, 2, 3}, p);
  auto c = lab.client();
  auto sub = c.Post("/api/experiments", spec.to_json().dump(), "application/json");
  ASSERT_TRUE(sub);
  ASSERT_EQ(sub->status, 200) << sub->body;
  auto start = c.Post("/api/experiments/500/start", "", "application/json");
  ASSERT_TRUE(start);
  EXPECT_EQ(start->status, 202);
  EXPECT_EQ(c.Post("/api/experiments/500/start", "", "application/json")->status, 409);

  ASSERT_TRUE(lab.orch.wait(500, 60s));
  EXPECT_EQ(lab.orch.state(500), ExperimentState::completed);
  auto runs = lab.orch.runs(500);
  ASSERT_EQ(runs.size(), 2u);
  std::set<BlockHash> genesis;
  for (std::uint32_t i = 0; i < 2; ++i) {
    const auto& r = runs[i];
    EXPECT_EQ(r.run_id, 500 + i);
    EXPECT_EQ(r.repetition_index, i);
    EXPECT_FALSE(r.aborted);
    EXPECT_TRUE(r.incomplete_nodes().empty());
    auto span = r.ended_at_ms - r.started_at_ms;
    EXPECT_GE(span, 5000);
    EXPECT_LE(span, 10000);
    EXPECT_GT(r.aggregate.metrics.total_canonical, 0u);
    for (const auto& [id, st] : r.nodes) {
      EXPECT_TRUE(st.finalized) << id;
      EXPECT_EQ(st.live_matches_log, true) << id;
    }
    auto log = read_log(lab.orch.store().log_path(r.run_id, 1).value());
    EXPECT_EQ(log.records.front().kind, EventKind::run_start);
    EXPECT_EQ(log.records.back().kind, EventKind::run_stop);
    genesis.insert(replay_node(log).genesis);

    auto stored = body_of(c.Get("/api/runs/" + std::to_string(r.run_id) + "/metrics"));
    EXPECT_EQ(RunRecord::from_json(stored), r);
    auto raw = c.Get("/api/runs/" + std::to_string(r.run_id) + "/logs/2");
    ASSERT_TRUE(raw);
    EXPECT_EQ(raw->status, 200);
    EXPECT_EQ(lab.orch.store().reaggregate(r), r.aggregate);
  }
  EXPECT_EQ(genesis.size(), 2u);
  EXPECT_EQ(body_of(c.Get("/api/experiments/500/runs"))["runs"].size(), 2u);

  // The same ids cannot be recorded twice.
  auto again = c.Post("/api/experiments", spec.to_json().dump(), "application/json");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 422);
}

TEST(OrchestratorHttp, NodeLostMidRunIsFlagged) {
  Lab lab({1, 2, 3});
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  PresetParams p;
  p.experiment_id = 600;
  p.duration_s = 5;
  p.difficulty = 4000;
  auto spec = scenario_preset("fully-connected", {1, 2, 3}, p);
  ASSERT_TRUE(lab.orch.submit(spec.to_json()).violations.empty());
  lab.orch.start(600);
  ASSERT_TRUE(wait_until([&] { return lab.nodes.at(3)->status().phase == node::Phase::mining; }, 10s));
  std::this_thread::sleep_for(1s);
  lab.nodes.at(3)->shutdown();

  ASSERT_TRUE(lab.orch.wait(600, 60s));
  auto runs = lab.orch.runs(600);
  ASSERT_EQ(runs.size(), 1u);
  const auto& r = runs[0];
  EXPECT_FALSE(r.aborted);
  EXPECT_EQ(r.incomplete_nodes(), (std::vector<NodeId>{3}));
  EXPECT_FALSE(r.nodes.at(3).errors.empty());
  EXPECT_EQ(r.aggregate.considered, (std::vector<NodeId>{1, 2}));
  EXPECT_TRUE(r.nodes.at(1).log_complete);
}

TEST(OrchestratorHttp, StopEndsRunEarly) {
  Lab lab({1, 2});
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  PresetParams p;
  p.experiment_id = 700;
  p.duration_s = 60;
  p.repetitions = 3;
  p.difficulty = 4000;
  ASSERT_TRUE(lab.orch.submit(scenario_preset("fully-connected", {1, 2}, p).to_json()).violations.empty());
  lab.orch.start(700);
  ASSERT_TRUE(wait_until([&] { return lab.nodes.at(1)->status().phase == node::Phase::mining; }, 10s));
  auto c = lab.client();
  EXPECT_EQ(c.Post("/api/experiments/700/stop", "", "application/json")->status, 200);
  ASSERT_TRUE(lab.orch.wait(700, 30s));
  EXPECT_EQ(lab.orch.state(700), ExperimentState::stopped);
  auto runs = lab.orch.runs(700);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_TRUE(runs[0].stopped_early);
  EXPECT_TRUE(runs[0].incomplete_nodes().empty());
}

TEST(OrchestratorHttp, MissingNodeAbortsBeforeStart) {
  Lab lab({1, 2});
  ASSERT_TRUE(wait_until([&] { return lab.all_registered(); }, 5s));
  PresetParams p;
  p.experiment_id = 800;
  p.duration_s = 5;
  ASSERT_TRUE(lab.orch.submit(scenario_preset("fully-connected", {1, 2}, p).to_json()).violations.empty());
  lab.nodes.at(2)->shutdown();  // still listed as reachable until its heartbeat lapses
  lab.orch.start(800);
  ASSERT_TRUE(lab.orch.wait(800, 30s));
  EXPECT_EQ(lab.orch.state(800), ExperimentState::aborted);
  auto runs = lab.orch.runs(800);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_TRUE(runs[0].aborted);
  EXPECT_NE(runs[0].abort_reason.find("node 2"), std::string::npos) << runs[0].abort_reason;
  EXPECT_FALSE(lab.orch.store().load(800));
  // Node 1 was configured but never mined.
  EXPECT_EQ(lab.nodes.at(1)->status().blocks_mined, 0u);
}

}  // namespace
}  // namespace powlab::orch
