// powlab-acceptance: runs the acceptance criteria end to end and prints one
// PASS/FAIL line per criterion. Multi-node scenarios spawn real
// powlab-orchestrator and powlab-node processes on loopback and submit spec
// files through `powlab-orchestrator experiment run`.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "../fork_choice_oracle.hpp"
#include "../golden_fixtures.hpp"
#include "../process.hpp"
#include "../test_support.hpp"
#include "powlab/core/block_tree.hpp"
#include "powlab/metrics/metrics.hpp"
#include "powlab/metrics/replay.hpp"
#include "powlab/miner/miner.hpp"
#include "powlab/orchestrator/run_record.hpp"
#include "powlab/util/bytes.hpp"

namespace powlab::acceptance {
namespace {

using namespace std::chrono_literals;
using json = nlohmann::json;
using orch::RunRecord;
using test::Child;
using test::TempDir;

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Verdict()> check;
  bool scenario;  // spawns processes; runs concurrently with the others
};

std::mutex g_log_mu;

void note(const std::string& what) {
  std::lock_guard lock(g_log_mu);
  std::cerr << "  .. " << what << std::endl;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// ---- in-process criteria ----

Verdict fork_choice_oracle() {
  Stopwatch sw;
  std::random_device rd;
  auto seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  std::mt19937_64 rng(seed);
  int mismatches = 0;
  int ties = 0;
  int cases = 0;
  for (int dag_no = 0; dag_no < 500; ++dag_no) {
    int n = 1 + static_cast<int>(rng() % 50);
    auto dag = test::random_dag(rng, n, 4);
    for (int perm = 0; perm < 3; ++perm) {
      auto order = test::random_order(rng, dag.blocks.size());
      BlockTree tree(dag.genesis);
      for (int i : order) tree.insert(dag.blocks[static_cast<std::size_t>(i)]);
      auto expected = test::oracle_head(dag, order);
      ++cases;
      ties += expected.tie;
      if (tree.head() != expected.head) ++mismatches;
    }
  }
  auto t = sw.seconds();
  return {mismatches == 0 && ties > 0 && t < 30.0,
          fmt("%d insertion orders over 500 DAGs, %d mismatches, %d tie cases, seed %llu, %.1f s", cases, mismatches,
              ties, static_cast<unsigned long long>(seed), t)};
}

Verdict fork_fixture() {
  auto g = make_genesis(1);
  auto b1 = test::child_of(g, 1, 1, 10);
  auto b2 = test::child_of(b1, 1, 2, 20);
  auto b3 = test::child_of(b1, 1, 3, 30);
  auto b4 = test::child_of(b3, 1, 3, 40);
  BlockTree tree(g);
  for (const auto& b : {b1, b2, b3, b4}) tree.insert(b);
  auto chain = tree.canonical_chain();
  auto uncles = tree.uncle_set();
  auto m = compute_node_metrics(tree, 1);
  bool ok = chain == std::vector<BlockHash>{g.hash, b1.hash, b3.hash, b4.hash} &&
            uncles == std::vector<BlockHash>{b2.hash} && m.uncle_count == 1 && m.uncle_rate == 0.25;
  return {ok, fmt("canonical length %zu, %zu uncle(s), uncle_rate %.4f", chain.size(), uncles.size(), m.uncle_rate)};
}

Verdict pow_statistics() {
  Stopwatch sw;
  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) | rd());
  MinerConfig cfg;
  cfg.miner_id = 1;
  cfg.difficulty = 64;
  auto head = BlockSummary::of(make_genesis(3));
  std::uint64_t total = 0;
  for (int i = 0; i < 1000; ++i) {
    auto job = build_candidate(head, cfg, static_cast<std::uint64_t>(i), 3, rng);
    MineResult r;
    do {
      r = mine_batch(job, 1);
      total += r.attempts;
    } while (r.status != MineResult::Status::found);
  }
  double mean = static_cast<double>(total) / 1000.0;
  auto t = sw.seconds();
  return {mean >= 48.0 && mean <= 80.0 && t < 10.0,
          fmt("mean attempts %.2f over 1000 blocks at difficulty 64, %.2f s", mean, t)};
}

Verdict wire_golden() {
  Stopwatch sw;
  int bad = 0;
  for (const auto& [msg, hex] : golden::messages()) {
    if (to_hex(p2p::encode_frame(msg)) != hex || !(p2p::decode_frame(from_hex(hex)) == msg)) ++bad;
  }
  auto block_bytes = encode_block(golden::sample_block());
  if (block_bytes.size() != kBlockBytes || to_hex(block_bytes) != golden::kBlock) ++bad;

  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) | rd());
  auto rand_hash = [&] {
    BlockHash h;
    for (auto& b : h.bytes) b = static_cast<std::uint8_t>(rng());
    return h;
  };
  auto rand_block = [&] {
    BlockHeader h;
    h.experiment_id = static_cast<ExperimentId>(rng());
    h.height = rng();
    h.parent_hash = rand_hash();
    h.miner_id = static_cast<NodeId>(rng());
    h.difficulty = rng() | 1;
    h.timestamp_ms = rng();
    h.nonce = rng();
    return Block{h, rand_hash()};
  };
  int trips = 0;
  for (int i = 0; i < 6000; ++i) {
    p2p::WireMessage msg;
    msg.sender = static_cast<NodeId>(rng());
    switch (i % 6) {
      case 0: msg.payload = p2p::Hello{static_cast<ExperimentId>(rng()), rand_hash(), rand_hash(), rng(), static_cast<NodeId>(rng())}; break;
      case 1: msg.payload = p2p::NewBlock{rand_block()}; break;
      case 2: msg.payload = p2p::GetBlock{rand_hash()}; break;
      case 3: msg.payload = rng() % 2 ? p2p::BlockResponse{rand_block()} : p2p::BlockResponse{}; break;
      case 4: msg.payload = p2p::GetHead{}; break;
      case 5: msg.payload = p2p::HeadResponse{rand_hash(), rng()}; break;
    }
    if (!(p2p::decode_frame(p2p::encode_frame(msg)) == msg)) ++bad;
    auto b = rand_block();
    b.hash = hash_header(b.header);
    if (!(decode_block(encode_block(b)) == b)) ++bad;
    trips += 2;
  }
  auto t = sw.seconds();
  return {bad == 0 && t < 5.0,
          fmt("%zu golden frames + block encoding, %d random round trips, %d mismatches, %.2f s",
              golden::messages().size(), trips, bad, t)};
}

// ---- multi-process scenarios ----

const std::regex kNodeLine(R"(node (\d+) p2p=\S+ rpc=\S+)");
const std::regex kOrchLine(R"(orchestrator listening on port (\d+))");

/// One orchestrator plus nodes 1..n, all as child processes.
class Cluster {
 public:
  Cluster(std::string tag, int n) : tag_(std::move(tag)) {
    Child* o = new Child({POWLAB_ORCH_BIN, "--listen", "127.0.0.1:0", "--data-dir", (dir_.path() / "orch").string()});
    orch_.reset(o);
    port_ = std::stoi(o->expect_line(kOrchLine)[1].str());
    url_ = "http://127.0.0.1:" + std::to_string(port_);
    for (int id = 1; id <= n; ++id) {
      nodes_.push_back(std::make_unique<Child>(std::vector<std::string>{
          POWLAB_NODE_BIN, "--node-id", std::to_string(id), "--p2p-listen", "127.0.0.1:0", "--rpc-listen",
          "127.0.0.1:0", "--data-dir", (dir_.path() / "nodes").string(), "--orchestrator-url", url_}));
      nodes_.back()->expect_line(kNodeLine);
    }
    bool ok = test::wait_until(
        [&] {
          auto r = client().Get("/api/nodes");
          return r && json::parse(r->body).size() == static_cast<std::size_t>(n);
        },
        20s);
    if (!ok) throw std::runtime_error(tag_ + ": nodes did not register");
  }

  ~Cluster() {
    for (auto& c : nodes_) c->signal(SIGTERM);
    for (auto& c : nodes_) c->wait();
    orch_->signal(SIGTERM);
    orch_->wait();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

  json preset(const std::string& name, const std::string& query) const {
    auto r = client().Get("/api/presets/" + name + "?" + query);
    if (!r || r->status != 200) throw std::runtime_error(tag_ + ": preset " + name + " failed");
    return json::parse(r->body);
  }

  /// Writes the spec to a file and runs it headless through the CLI.
  std::vector<RunRecord> run(const json& spec) const {
    auto file = dir_.path() / ("spec-" + std::to_string(spec.at("experiment_id").get<long>()) + ".json");
    std::ofstream(file) << spec.dump(2);
    note(tag_ + ": experiment " + spec.at("experiment_id").dump() + " (" + spec.at("repetitions").dump() + " x " +
         spec.at("duration_s").dump() + " s)");
    std::string out;
    int code = test::run({POWLAB_ORCH_BIN, "experiment", "run", file.string(), "--url", url_, "--json"}, &out);
    if (code != 0) throw std::runtime_error(tag_ + ": experiment run exited " + std::to_string(code));
    std::vector<RunRecord> runs;
    auto parsed = json::parse(out);
    for (const auto& r : parsed.at("runs")) runs.push_back(RunRecord::from_json(r));
    return runs;
  }

  NodeLog log(ExperimentId run, NodeId node) const {
    auto r = client().Get("/api/runs/" + std::to_string(run) + "/logs/" + std::to_string(node));
    if (!r || r->status != 200) throw std::runtime_error(tag_ + ": log not served");
    std::istringstream in(r->body);
    return parse_log(in, "node-" + std::to_string(node) + ".jsonl");
  }

 private:
  std::string tag_;
  TempDir dir_;
  std::unique_ptr<Child> orch_;
  std::vector<std::unique_ptr<Child>> nodes_;
  int port_ = 0;
  std::string url_;
};

bool clean(const RunRecord& r) { return !r.aborted && r.incomplete_nodes().empty(); }

std::string ms_list(const std::vector<RunRecord>& runs) {
  std::string s;
  for (const auto& r : runs) {
    if (!s.empty()) s += ",";
    s += r.aggregate.convergence_time_ms ? std::to_string(*r.aggregate.convergence_time_ms) : "none";
  }
  return s;
}

// 5 nodes x 5000 attempts/s at difficulty 50000: 0.5 blocks/s network-wide.
Verdict convergence() {
  Stopwatch sw;
  Cluster c("convergence", 5);
  auto spec = c.preset("fully-connected",
                       "nodes=1,2,3,4,5&experiment_id=4000&duration_s=60&repetitions=10&difficulty=50000"
                       "&attempts_per_sec_per_worker=5000");
  auto runs = c.run(spec);
  int good = 0;
  for (const auto& r : runs) {
    if (clean(r) && r.aggregate.considered.size() == 5 && r.aggregate.convergence_time_ms &&
        *r.aggregate.convergence_time_ms <= 5000) {
      ++good;
    }
  }
  auto t = sw.seconds();
  return {runs.size() == 10 && good >= 9 && t < 900.0,
          fmt("%d/%zu runs with all 5 heads equal within 5 s of stop (ms: %s), %.0f s", good, runs.size(),
              ms_list(runs).c_str(), t)};
}

// Same topology at ~1 block/s, all nodes delaying outbound messages 0 vs 2000 ms.
Verdict degradation() {
  Stopwatch sw;
  auto leg = [](ExperimentId id, int delay) {
    Cluster c("degradation-" + std::to_string(delay) + "ms", 5);
    auto spec = c.preset("fully-connected", "nodes=1,2,3,4,5&experiment_id=" + std::to_string(id) +
                                                "&duration_s=60&repetitions=5&difficulty=25000"
                                                "&attempts_per_sec_per_worker=5000&outbound_delay_ms=" +
                                                std::to_string(delay));
    return c.run(spec);
  };
  auto fast = std::async(std::launch::async, leg, 5000, 0);
  auto slow = std::async(std::launch::async, leg, 5100, 2000);
  auto a = fast.get();
  auto b = slow.get();
  std::vector<double> ua;
  std::vector<double> ub;
  bool complete = a.size() == 5 && b.size() == 5;
  for (const auto& r : a) {
    complete = complete && clean(r);
    ua.push_back(r.aggregate.metrics.uncle_rate);
  }
  for (const auto& r : b) {
    complete = complete && clean(r);
    ub.push_back(r.aggregate.metrics.uncle_rate);
  }
  if (ua.empty() || ub.empty()) return {false, "no runs"};
  double ma = median(ua);
  double mb = median(ub);
  auto t = sw.seconds();
  return {complete && mb > ma && t < 900.0,
          fmt("median uncle_rate %.4f at 0 ms vs %.4f at 2000 ms over %zu+%zu runs, %.0f s", ma, mb, ua.size(),
              ub.size(), t)};
}

// 4 equal miners, 2 blocks/s for 150 s (~300 blocks expected).
Verdict fairness() {
  Stopwatch sw;
  Cluster c("fairness", 4);
  auto spec = c.preset("fully-connected",
                       "nodes=1,2,3,4&experiment_id=6000&duration_s=150&difficulty=10000"
                       "&attempts_per_sec_per_worker=5000");
  auto runs = c.run(spec);
  if (runs.size() != 1) return {false, "run missing"};
  const auto& m = runs[0].aggregate.metrics;
  bool in_band = true;
  std::string shares;
  for (NodeId id = 1; id <= 4; ++id) {
    double pct = m.contribution_pct(id);
    in_band = in_band && pct >= 15.0 && pct <= 35.0;
    shares += fmt("%s%u=%.1f%%", id == 1 ? "" : " ", id, pct);
  }
  auto t = sw.seconds();
  return {clean(runs[0]) && m.total_canonical >= 200 && in_band && t < 600.0,
          fmt("%llu canonical blocks, shares %s, %.0f s", static_cast<unsigned long long>(m.total_canonical),
              shares.c_str(), t)};
}

// majority-51 on 5 nodes: attacker 5 workers vs 4 x 1 (55.6% of hashrate).
Verdict majority() {
  Stopwatch sw;
  Cluster c("majority-51", 5);
  auto spec = c.preset("majority-51",
                       "nodes=1,2,3,4,5&experiment_id=7000&duration_s=240&difficulty=22500"
                       "&attempts_per_sec_per_worker=5000");
  std::uint64_t total = 0;
  std::uint64_t attacker = 0;
  for (const auto& [id, p] : spec.at("nodes").items()) {
    auto rate = p.at("worker_count").get<std::uint64_t>() * p.at("attempts_per_sec_per_worker").get<std::uint64_t>();
    total += rate;
    if (id == "1") attacker = rate;
  }
  auto runs = c.run(spec);
  if (runs.size() != 1) return {false, "run missing"};
  const auto& m = runs[0].aggregate.metrics;
  double share = m.contribution_pct(1);
  auto t = sw.seconds();
  return {clean(runs[0]) && m.total_canonical >= 200 && share > 50.0 && t < 600.0,
          fmt("attacker hashrate %.1f%%, canonical share %.1f%% of %llu blocks, %.0f s",
              100.0 * static_cast<double>(attacker) / static_cast<double>(total), share,
              static_cast<unsigned long long>(m.total_canonical), t)};
}

// eclipse on 4 nodes: victim 4 has no peers.
Verdict eclipse() {
  Stopwatch sw;
  Cluster c("eclipse", 4);
  auto spec = c.preset("eclipse",
                       "nodes=1,2,3,4&experiment_id=8000&duration_s=60&difficulty=40000"
                       "&attempts_per_sec_per_worker=5000");
  auto runs = c.run(spec);
  if (runs.size() != 1) return {false, "run missing"};
  const auto& r = runs[0];
  auto log = c.log(r.run_id, 4);
  std::size_t foreign = 0;
  std::size_t own = 0;
  for (const auto& rec : log.records) {
    if (rec.kind == EventKind::received) ++foreign;
    if (rec.kind == EventKind::mined) {
      block_from_json(rec.payload.at("block")).header.miner_id == 4 ? ++own : ++foreign;
    }
  }
  auto victim = replay_node(log);
  bool only_own = foreign == 0 && victim.stored.size() == own + 1;
  const auto& a = r.aggregate;
  bool excluded = a.excluded == std::vector<NodeId>{4} && a.considered == std::vector<NodeId>{1, 2, 3};
  bool converged = a.convergence_time_ms && *a.convergence_time_ms <= 5000;
  auto t = sw.seconds();
  return {clean(r) && only_own && excluded && converged && t < 180.0,
          fmt("victim tree: genesis + %zu own, %zu foreign; excluded %s; others converged in %s ms; %.0f s", own,
              foreign, json(a.excluded).dump().c_str(), ms_list(runs).c_str(), t)};
}

// Ring of 4 with 300 ms delay so forks and reorgs occur.
Verdict live_vs_replay() {
  Stopwatch sw;
  Cluster c("live-vs-replay", 4);
  auto spec = c.preset("ring",
                       "nodes=1,2,3,4&experiment_id=10000&duration_s=20&repetitions=3&difficulty=10000"
                       "&attempts_per_sec_per_worker=5000&outbound_delay_ms=300");
  auto runs = c.run(spec);
  int equal = 0;
  int compared = 0;
  std::uint64_t uncles = 0;
  for (const auto& r : runs) {
    for (const auto& [id, st] : r.nodes) {
      ++compared;
      if (st.live_matches_log == true) ++equal;
    }
    uncles += r.aggregate.metrics.uncle_count;
  }
  auto t = sw.seconds();
  return {runs.size() == 3 && compared == 12 && equal == compared,
          fmt("%d/%d node-runs with powlab_getMetrics equal to log replay over %zu runs (%llu uncles seen), %.0f s",
              equal, compared, runs.size(), static_cast<unsigned long long>(uncles), t)};
}

Verdict guarded(const std::function<Verdict()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace
}  // namespace powlab::acceptance

int main(int argc, char** argv) {
  using namespace powlab::acceptance;
  CLI::App app{"powlab acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion numbers to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  std::vector<Criterion> all = {
      {1, "fork-choice oracle", fork_choice_oracle, false},
      {2, "fork fixture", fork_fixture, false},
      {3, "pow statistics", pow_statistics, false},
      {4, "convergence", convergence, true},
      {5, "degradation with latency", degradation, true},
      {6, "fairness", fairness, true},
      {7, "51% attack", majority, true},
      {8, "eclipse", eclipse, true},
      {9, "wire golden files", wire_golden, false},
      {10, "live vs replay", live_vs_replay, true},
  };
  std::vector<Criterion> chosen;
  for (const auto& c : all) {
    if (only.empty() || std::find(only.begin(), only.end(), c.id) != only.end()) chosen.push_back(c);
  }

  std::map<int, Verdict> verdicts;
  std::map<int, std::future<Verdict>> running;
  for (const auto& c : chosen) {
    if (c.scenario) running[c.id] = std::async(std::launch::async, guarded, c.check);
  }
  for (const auto& c : chosen) {
    if (!c.scenario) {
      verdicts[c.id] = guarded(c.check);
      note(fmt("criterion %d done", c.id));
    }
  }
  for (auto& [id, f] : running) {
    verdicts[id] = f.get();
    note(fmt("criterion %d done", id));
  }

  int failed = 0;
  for (const auto& c : chosen) {
    const auto& v = verdicts.at(c.id);
    failed += !v.pass;
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), v.detail.c_str());
  }
  std::printf("%zu/%zu criteria passed\n", chosen.size() - static_cast<std::size_t>(failed), chosen.size());
  return failed == 0 ? 0 : 1;
}
