#include "powlab/node/node.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <variant>

#include <httplib.h>

#include "powlab/metrics/event_log.hpp"
#include "powlab/metrics/json_codec.hpp"
#include "powlab/miner/miner.hpp"
#include "powlab/p2p/gossip.hpp"
#include "powlab/util/event_loop.hpp"

namespace powlab::node {

std::int64_t wall_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

std::uint64_t steady_ms() {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count());
}

constexpr std::chrono::milliseconds kBackfillSweep{200};

void warn(const std::string& msg) { std::fprintf(stderr, "node: %s\n", msg.c_str()); }

json hash_list(const std::vector<Block>& blocks) {
  json out = json::array();
  for (const auto& b : blocks) out.push_back(b.hash.hex());
  return out;
}

}  // namespace

struct Node::Impl {
  struct Link {
    std::optional<NodeId> dialed;
    std::optional<NodeId> peer;          // set once hello is accepted
    std::deque<BlockHash> requested;     // outstanding get-block, in send order
  };

  NodeOptions opts;
  EventLoop loop;
  std::unique_ptr<p2p::Transport> transport;
  httplib::Server http;
  std::uint16_t http_port = 0;
  std::thread http_thread;
  std::thread registrar;
  std::mutex reg_mu;
  std::condition_variable reg_cv;
  bool reg_stop = false;
  std::atomic<bool> shut{false};

  // Owned by the loop thread.
  Phase phase = Phase::idle;
  std::optional<SpecSlice> slice;
  std::uint64_t generation = 0;
  BlockTree tree{make_genesis(0)};
  std::uint64_t tree_version = 0;
  p2p::GossipState gossip;
  p2p::BackfillTracker backfill;
  std::map<p2p::ConnId, Link> links;
  std::map<NodeId, p2p::ConnId> peer_conn;
  std::unordered_map<BlockHash, NodeId> delivered_by;  // sender of each buffered orphan
  std::unique_ptr<Miner> miner;
  std::unique_ptr<EventLog> log;
  std::vector<std::pair<std::int64_t, EventRecord>> pending;  // wall ms, record; before start
  std::int64_t apply_wall = 0;
  std::optional<std::int64_t> start_at;
  std::int64_t last_ts = INT64_MIN;
  std::optional<std::int64_t> mining_stopped_ts;
  bool run_open = false;
  bool finalized = false;
  bool degraded = false;
  std::uint64_t blocks_mined = 0;

  // Published for other threads.
  mutable std::mutex pub_mu;
  std::shared_ptr<const NodeSnapshot> snap;
  std::uint64_t published_version = UINT64_MAX;
  std::map<ExperimentId, std::filesystem::path> log_files;

  explicit Impl(NodeOptions o) : opts(std::move(o)) {
    p2p::Transport::Handlers h;
    h.opened = [this](p2p::ConnId c, std::optional<NodeId> dialed) { loop.post([=, this] { on_open(c, dialed); }); };
    h.message = [this](p2p::ConnId c, p2p::WireMessage m) {
      loop.post([this, c, m = std::move(m)] { on_message(c, m); });
    };
    h.closed = [this](p2p::ConnId c, std::string reason) {
      loop.post([this, c, reason = std::move(reason)] { on_close(c, reason); });
    };
    transport = std::make_unique<p2p::Transport>(opts.p2p_listen, std::move(h));

    routes();
    // httplib defaults to SO_REUSEPORT, which lets a second process share the port.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    std::string host = opts.rpc_listen.host.empty() ? "0.0.0.0" : opts.rpc_listen.host;
    if (opts.rpc_listen.port == 0) {
      int port = http.bind_to_any_port(host);
      if (port <= 0) throw std::system_error(std::make_error_code(std::errc::address_in_use), "rpc listen " + host);
      http_port = static_cast<std::uint16_t>(port);
    } else {
      if (!http.bind_to_port(host, opts.rpc_listen.port)) {
        throw std::system_error(std::make_error_code(std::errc::address_in_use),
                                "rpc listen " + opts.rpc_listen.str());
      }
      http_port = opts.rpc_listen.port;
    }

    publish();
    loop.set_after_task([this] { publish(); });
    loop.start();
    http_thread = std::thread([this] { http.listen_after_bind(); });
    http.wait_until_ready();  // stop() is a no-op until the server runs
    if (opts.orchestrator_url) registrar = std::thread([this] { register_loop(); });
  }

  ~Impl() { shutdown(); }

  void shutdown() {
    if (shut.exchange(true)) return;
    {
      std::lock_guard lock(reg_mu);
      reg_stop = true;
    }
    reg_cv.notify_all();
    if (registrar.joinable()) registrar.join();
    http.stop();
    if (http_thread.joinable()) http_thread.join();
    loop.call([this] {
      finalize_run("shutdown");
      miner.reset();
    });
    loop.stop();
    transport.reset();
  }

  std::string p2p_address() const { return opts.advertise_host + ":" + std::to_string(transport->port()); }
  std::string rpc_address() const { return opts.advertise_host + ":" + std::to_string(http_port); }

  // ---- snapshots ----

  NodeStatus make_status() const {
    NodeStatus s;
    s.phase = phase;
    s.node_id = opts.node_id;
    s.color = slice ? slice->color : "";
    s.head_hash = tree.head();
    s.head_height = tree.head_block().header.height;
    s.peer_count = peer_conn.size();
    s.blocks_mined = blocks_mined;
    s.experiment_id = slice ? slice->experiment_id : 0;
    s.run_id = slice ? slice->run_id : 0;
    s.run_finalized = finalized;
    s.logging_degraded = degraded;
    return s;
  }

  void publish() {
    auto next = std::make_shared<NodeSnapshot>();
    next->status = make_status();
    std::lock_guard lock(pub_mu);
    next->tree = (snap && published_version == tree_version) ? snap->tree : std::make_shared<const BlockTree>(tree);
    published_version = tree_version;
    snap = std::move(next);
  }

  std::shared_ptr<const NodeSnapshot> snapshot() const {
    std::lock_guard lock(pub_mu);
    return snap;
  }

  // ---- logging ----

  void record(EventKind kind, json payload) {
    if (!run_open) return;
    EventRecord r{0, opts.node_id, kind, std::move(payload)};
    if (!start_at) {
      pending.emplace_back(wall_ms(), std::move(r));
      return;
    }
    write(std::move(r), wall_ms());
  }

  void write(EventRecord r, std::int64_t wall) {
    r.ts_ms = std::max(last_ts, wall - *start_at);
    last_ts = r.ts_ms;
    if (!log || !log->append(r)) {
      if (!degraded) warn("event log degraded; continuing without persistence");
      degraded = true;
    }
  }

  std::int64_t run_ts() const { return start_at ? std::max(last_ts, wall_ms() - *start_at) : 0; }

  void open_log(std::int64_t start_at_ms) {
    start_at = start_at_ms;
    auto path = EventLog::path_for(opts.data_dir, slice->experiment_id, slice->run_id, opts.node_id);
    try {
      log = std::make_unique<EventLog>(path);
    } catch (const std::exception& e) {
      warn(std::string("cannot open event log: ") + e.what());
      log.reset();
      degraded = true;
    }
    {
      std::lock_guard lock(pub_mu);
      log_files[slice->run_id] = path;
    }
    json peers = json::array();
    for (const auto& [id, addr] : slice->peers) peers.push_back(id);
    write(EventRecord{0, opts.node_id, EventKind::run_start,
                      {{"experiment_id", slice->experiment_id},
                       {"run_id", slice->run_id},
                       {"genesis", tree.genesis().hex()},
                       {"start_at_ms", start_at_ms},
                       {"color", slice->color},
                       {"difficulty", slice->difficulty},
                       {"worker_count", slice->worker_count},
                       {"attempts_per_sec_per_worker", slice->attempts_per_sec_per_worker},
                       {"outbound_delay_ms", slice->outbound_delay_ms},
                       {"peers", peers}}},
          apply_wall);
    for (auto& [wall, r] : pending) write(std::move(r), wall);
    pending.clear();
  }

  // ---- control ----

  NodeStatus apply(const SpecSlice& s) {
    if (phase == Phase::mining) throw ControlError(409, "busy: node is mining; stop first");
    if (s.node_id != opts.node_id) {
      throw ControlError(400, "slice for node " + std::to_string(s.node_id) + " sent to node " +
                                  std::to_string(opts.node_id));
    }
    std::map<NodeId, p2p::Endpoint> targets;
    for (const auto& [id, addr] : s.peers) {
      try {
        auto ep = p2p::Endpoint::parse(addr);
        if (id > opts.node_id) targets[id] = ep;
      } catch (const std::exception& e) {
        throw ControlError(400, std::string("peer ") + std::to_string(id) + ": " + e.what());
      }
    }

    finalize_run("reconfigured");
    ++generation;
    miner.reset();
    slice = s;
    tree = BlockTree(make_genesis(s.run_id));
    ++tree_version;
    gossip.reset();
    backfill.reset();
    links.clear();
    peer_conn.clear();
    delivered_by.clear();
    log.reset();
    pending.clear();
    start_at.reset();
    last_ts = INT64_MIN;
    mining_stopped_ts.reset();
    finalized = false;
    degraded = false;
    blocks_mined = 0;
    run_open = true;
    apply_wall = wall_ms();

    transport->set_outbound_delay(s.outbound_delay_ms);
    transport->connect_to(std::move(targets));
    phase = Phase::configured;
    schedule_sweep(generation);
    return make_status();
  }

  NodeStatus start(std::int64_t start_at_ms) {
    if (phase == Phase::mining) throw ControlError(409, "busy: already mining");
    if (phase != Phase::configured) throw ControlError(409, "not configured");
    open_log(start_at_ms);
    phase = Phase::mining;
    auto gen = generation;
    auto delay = std::max<std::int64_t>(0, start_at_ms - wall_ms());
    loop.post_after(std::chrono::milliseconds(delay), [this, gen] {
      if (gen == generation && phase == Phase::mining) begin_mining();
    });
    return make_status();
  }

  NodeStatus stop(std::uint64_t settle_ms) {
    if (phase == Phase::idle) throw ControlError(409, "not configured");
    if (phase == Phase::stopped) return make_status();
    miner.reset();
    if (!start_at) open_log(apply_wall);
    mining_stopped_ts = run_ts();
    phase = Phase::stopped;
    if (settle_ms == 0) {
      finalize_run("stopped");
    } else {
      auto gen = generation;
      loop.post_after(std::chrono::milliseconds(settle_ms), [this, gen] {
        if (gen == generation) finalize_run("stopped");
      });
    }
    return make_status();
  }

  void begin_mining() {
    if (slice->worker_count == 0) return;
    MinerConfig cfg{opts.node_id, slice->difficulty, slice->worker_count, slice->attempts_per_sec_per_worker};
    auto gen = generation;
    auto origin = *start_at;
    miner = std::make_unique<Miner>(
        cfg, slice->run_id,
        [this, gen](const Block& b) {
          loop.post([this, gen, b] {
            if (gen == generation && phase == Phase::mining) handle_block(b, std::nullopt);
          });
        },
        [origin] { return static_cast<std::uint64_t>(std::max<std::int64_t>(0, wall_ms() - origin)); });
    miner->start(BlockSummary::of(tree.head_block()));
  }

  void finalize_run(const std::string& reason) {
    if (!run_open) return;
    miner.reset();
    if (!start_at) open_log(apply_wall);
    if (!mining_stopped_ts) mining_stopped_ts = run_ts();
    for (const auto& [peer, conn] : peer_conn) record(EventKind::link_down, {{"peer", peer}, {"reason", "run finalized"}});
    transport->disconnect_all();
    links.clear();
    peer_conn.clear();
    backfill.reset();
    record(EventKind::run_stop, {{"mining_stopped_ts_ms", *mining_stopped_ts},
                                 {"head", tree.head().hex()},
                                 {"head_height", tree.head_block().header.height},
                                 {"reason", reason}});
    if (log) log->close();
    run_open = false;
    finalized = true;
    phase = Phase::stopped;
  }

  // ---- p2p ----

  std::vector<NodeId> live_peers() const {
    std::vector<NodeId> out;
    for (const auto& [id, conn] : peer_conn) out.push_back(id);
    return out;
  }

  void send(p2p::ConnId conn, p2p::Payload payload) { transport->send(conn, p2p::WireMessage{opts.node_id, std::move(payload)}); }

  void drop(p2p::ConnId conn, const std::string& reason) {
    auto it = links.find(conn);
    if (it == links.end()) return;
    if (it->second.peer) {
      warn("dropping link to node " + std::to_string(*it->second.peer) + ": " + reason);
      if (peer_conn[*it->second.peer] == conn) {
        peer_conn.erase(*it->second.peer);
        record(EventKind::link_down, {{"peer", *it->second.peer}, {"reason", reason}});
      }
    } else {
      warn("dropping unidentified link: " + reason);
    }
    links.erase(it);
    transport->close(conn, reason);
  }

  void request(NodeId peer, const BlockHash& hash) {
    auto it = peer_conn.find(peer);
    if (it == peer_conn.end()) return;
    links[it->second].requested.push_back(hash);
    send(it->second, p2p::GetBlock{hash});
  }

  void on_open(p2p::ConnId conn, std::optional<NodeId> dialed) {
    if (!run_open) {
      transport->close(conn, "node not configured");
      return;
    }
    links[conn] = Link{dialed, std::nullopt, {}};
    send(conn, p2p::Hello{slice->run_id, tree.genesis(), tree.head(), tree.head_block().header.height, opts.node_id});
  }

  void on_close(p2p::ConnId conn, const std::string& reason) {
    auto it = links.find(conn);
    if (it == links.end()) return;
    if (it->second.peer && peer_conn.contains(*it->second.peer) && peer_conn[*it->second.peer] == conn) {
      peer_conn.erase(*it->second.peer);
      record(EventKind::link_down, {{"peer", *it->second.peer}, {"reason", reason}});
    }
    links.erase(it);
  }

  void on_hello(p2p::ConnId conn, Link& link, NodeId sender, const p2p::Hello& h) {
    std::string problem;
    if (h.experiment_id != slice->run_id) {
      problem = "experiment mismatch (" + std::to_string(h.experiment_id) + ")";
    } else if (h.genesis_hash != tree.genesis()) {
      problem = "genesis mismatch";
    } else if (h.node_id != sender) {
      problem = "hello node id differs from sender";
    } else if (!slice->peers.contains(h.node_id)) {
      problem = "node " + std::to_string(h.node_id) + " is not a configured peer";
    } else if (link.dialed && *link.dialed != h.node_id) {
      problem = "dialed node " + std::to_string(*link.dialed) + " but reached " + std::to_string(h.node_id);
    } else if (!link.dialed && h.node_id > opts.node_id) {
      problem = "unexpected inbound link from higher id " + std::to_string(h.node_id);
    }
    if (!problem.empty()) {
      drop(conn, problem);
      return;
    }
    if (auto old = peer_conn.find(h.node_id); old != peer_conn.end() && old->second != conn) {
      auto old_conn = old->second;
      links.erase(old_conn);
      peer_conn.erase(old);
      transport->close(old_conn, "replaced by newer link");
      record(EventKind::link_down, {{"peer", h.node_id}, {"reason", "replaced by newer link"}});
    }
    link.peer = h.node_id;
    peer_conn[h.node_id] = conn;
    record(EventKind::link_up, {{"peer", h.node_id}});
    consider_head(h.node_id, h.head_hash, h.head_height);
  }

  void consider_head(NodeId peer, const BlockHash& head, std::uint64_t height) {
    if (height <= tree.head_block().header.height) return;
    if (tree.contains(head) || tree.is_orphan(head)) return;
    request(peer, head);
  }

  void on_message(p2p::ConnId conn, const p2p::WireMessage& msg) {
    auto it = links.find(conn);
    if (it == links.end()) return;
    Link& link = it->second;
    if (!link.peer) {
      if (auto* h = std::get_if<p2p::Hello>(&msg.payload)) {
        on_hello(conn, link, msg.sender, *h);
      } else {
        drop(conn, "message before hello");
      }
      return;
    }
    NodeId peer = *link.peer;
    if (msg.sender != peer) {
      drop(conn, "sender id changed mid-link");
      return;
    }
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, p2p::Hello>) {
            // repeated hello: ignored
          } else if constexpr (std::is_same_v<T, p2p::NewBlock>) {
            handle_block(p.block, peer);
          } else if constexpr (std::is_same_v<T, p2p::GetBlock>) {
            const Block* b = tree.find(p.hash);
            send(conn, p2p::BlockResponse{b ? std::optional<Block>(*b) : std::nullopt});
          } else if constexpr (std::is_same_v<T, p2p::BlockResponse>) {
            on_block_response(link, peer, p);
          } else if constexpr (std::is_same_v<T, p2p::GetHead>) {
            send(conn, p2p::HeadResponse{tree.head(), tree.head_block().header.height});
          } else if constexpr (std::is_same_v<T, p2p::HeadResponse>) {
            consider_head(peer, p.head_hash, p.head_height);
          }
        },
        msg.payload);
  }

  void on_block_response(Link& link, NodeId peer, const p2p::BlockResponse& resp) {
    if (link.requested.empty()) return;  // unsolicited
    BlockHash target = link.requested.front();
    link.requested.pop_front();
    if (resp.block) {
      handle_block(*resp.block, peer);
      return;
    }
    auto step = backfill.not_found(target, peer, live_peers(), steady_ms());
    if (step.next) request(step.next->peer, step.next->target);
    if (step.gave_up) abandon(target);
  }

  void abandon(const BlockHash& missing) {
    auto dropped = tree.drop_orphans(missing);
    ++tree_version;
    for (const auto& b : dropped) delivered_by.erase(b.hash);
    record(EventKind::backfill_failed, {{"missing_parent", missing.hex()}, {"dropped", hash_list(dropped)}});
  }

  void schedule_sweep(std::uint64_t gen) {
    loop.post_after(kBackfillSweep, [this, gen] {
      if (gen != generation || !run_open) return;
      auto sweep = backfill.expire(live_peers(), steady_ms());
      for (const auto& r : sweep.requests) request(r.peer, r.target);
      for (const auto& t : sweep.abandoned) abandon(t);
      schedule_sweep(gen);
    });
  }

  void handle_block(const Block& block, std::optional<NodeId> from) {
    json src = from ? json(*from) : json(nullptr);
    if (block.header.experiment_id != slice->run_id) {
      record(EventKind::rejected, {{"hash", block.hash.hex()}, {"from", src}, {"reason", "wrong-experiment"}});
      return;
    }
    auto out = tree.insert(block);
    if (out.kind == InsertKind::duplicate) return;
    if (out.kind == InsertKind::rejected) {
      record(EventKind::rejected,
             {{"hash", block.hash.hex()}, {"from", src}, {"reason", std::string(to_string(out.validation))}});
      return;
    }
    ++tree_version;
    json payload = {{"block", block_to_json(block)},
                    {"hash", block.hash.hex()},
                    {"height", block.header.height},
                    {"miner_id", block.header.miner_id},
                    {"outcome", std::string(to_string(out.kind))}};
    if (from) {
      payload["from"] = *from;
      record(EventKind::received, std::move(payload));
    } else {
      ++blocks_mined;
      record(EventKind::mined, std::move(payload));
    }
    backfill.resolve(block.hash);

    if (out.kind == InsertKind::orphaned) {
      if (!from) return;
      delivered_by[block.hash] = *from;
      BlockHash root = block.header.parent_hash;
      while (auto up = tree.orphan_parent(root)) root = *up;
      if (!backfill.pending(root)) {
        if (auto req = backfill.begin(root, *from, live_peers(), steady_ms())) request(req->peer, req->target);
      }
      return;
    }

    auto peers = live_peers();
    for (const auto& c : out.connected) {
      std::optional<NodeId> origin = from;
      if (c.hash != block.hash) {
        auto d = delivered_by.find(c.hash);
        origin = d != delivered_by.end() ? std::optional<NodeId>(d->second) : std::nullopt;
        if (d != delivered_by.end()) delivered_by.erase(d);
      }
      backfill.resolve(c.hash);
      for (NodeId p : gossip.plan(c.hash, origin, peers)) send(peer_conn.at(p), p2p::NewBlock{c});
    }

    if (out.head_changed()) {
      record(EventKind::head_change, {{"old_head", out.old_head.hex()},
                                      {"new_head", out.new_head.hex()},
                                      {"height", tree.head_block().header.height}});
      if (out.reorg_depth > 0) {
        record(EventKind::reorg,
               {{"old_head", out.old_head.hex()}, {"new_head", out.new_head.hex()}, {"depth", out.reorg_depth}});
      }
      if (miner) miner->set_head(BlockSummary::of(tree.head_block()));
    }
  }

  // Runs a control command on the loop and publishes before replying, so a
  // status read right after the call observes its effect.
  template <class Fn>
  NodeStatus command(Fn fn) {
    return loop.call([&] {
      auto s = fn();
      publish();
      return s;
    });
  }

  // ---- HTTP ----

  template <class Fn>
  json control(Fn fn) {
    if (shut) throw ControlError(503, "node shutting down");
    return command([&] { return fn(); }).to_json();
  }

  static void reply_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  }

  template <class Fn>
  void guarded(httplib::Response& res, Fn fn) {
    try {
      fn();
    } catch (const ControlError& e) {
      reply_error(res, e.status(), e.what());
    } catch (const json::exception& e) {
      reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw ControlError(400, std::string("malformed JSON: ") + e.what());
    }
  }

  void routes() {
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    auto rpc = [this](const httplib::Request& req, httplib::Response& res) {
      auto body = handle_rpc_body(req.body, *snapshot());
      if (body.empty()) {
        res.status = 204;
      } else {
        res.set_content(body, "application/json");
      }
    };
    http.Post("/", rpc);
    http.Post("/rpc", rpc);

    http.Post("/control/apply", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto s = SpecSlice::from_json(body_json(req));
        res.set_content(control([&] { return apply(s); }).dump(), "application/json");
      });
    });
    http.Post("/control/start", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto j = body_json(req);
        std::int64_t at = j.contains("start_at_ms") ? j.at("start_at_ms").get<std::int64_t>() : wall_ms();
        res.set_content(control([&] { return start(at); }).dump(), "application/json");
      });
    });
    http.Post("/control/stop", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto settle = body_json(req).value("settle_ms", std::uint64_t{0});
        res.set_content(control([&] { return stop(settle); }).dump(), "application/json");
      });
    });
    http.Get("/control/status", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(snapshot()->status.to_json().dump(), "application/json");
    });
    http.Get("/control/log", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("run")) throw ControlError(400, "missing run parameter");
        ExperimentId run = 0;
        try {
          run = static_cast<ExperimentId>(std::stoul(req.get_param_value("run")));
        } catch (const std::exception&) {
          throw ControlError(400, "bad run id");
        }
        auto path = find_log(run);
        if (!path) throw ControlError(404, "no log for run " + std::to_string(run));
        std::ifstream in(*path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        res.set_content(ss.str(), "application/x-ndjson");
      });
    });
  }

  std::optional<std::filesystem::path> find_log(ExperimentId run) const {
    {
      std::lock_guard lock(pub_mu);
      if (auto it = log_files.find(run); it != log_files.end()) return it->second;
    }
    // Runs from an earlier process with the same data dir.
    std::error_code ec;
    auto name = "node-" + std::to_string(opts.node_id) + ".jsonl";
    for (const auto& exp : std::filesystem::directory_iterator(opts.data_dir, ec)) {
      auto candidate = exp.path() / std::to_string(run) / name;
      if (std::filesystem::exists(candidate, ec)) return candidate;
    }
    return std::nullopt;
  }

  // ---- registration ----

  void register_loop() {
    std::unique_ptr<httplib::Client> client;
    try {
      client = std::make_unique<httplib::Client>(*opts.orchestrator_url);
    } catch (const std::exception& e) {
      warn("bad orchestrator url: " + std::string(e.what()));
      return;
    }
    client->set_connection_timeout(2, 0);
    client->set_read_timeout(5, 0);
    bool registered = false;
    std::string last_warning;
    auto note = [&](const std::string& w) {
      if (w != last_warning) warn(w);
      last_warning = w;
    };
    json announce = {{"node_id", opts.node_id}, {"p2p_address", p2p_address()}, {"rpc_address", rpc_address()}};
    while (true) {
      auto path = registered ? "/api/nodes/heartbeat" : "/api/nodes/register";
      auto res = client->Post(path, announce.dump(), "application/json");
      if (!res) {
        note("orchestrator unreachable at " + *opts.orchestrator_url + "; retrying");
        registered = false;
      } else if (res->status == 200) {
        if (!registered) last_warning.clear();
        registered = true;
      } else if (res->status == 404 && registered) {
        registered = false;  // orchestrator forgot us; re-register right away
        continue;
      } else {
        note("orchestrator refused " + std::string(path) + " (" + std::to_string(res->status) + "): " + res->body);
        registered = false;
      }
      std::unique_lock lock(reg_mu);
      auto wait = registered ? opts.heartbeat_ms : std::min<std::uint64_t>(opts.heartbeat_ms, 1000);
      if (reg_cv.wait_for(lock, std::chrono::milliseconds(wait), [this] { return reg_stop; })) return;
    }
  }
};

Node::Node(NodeOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}
Node::~Node() = default;

std::uint16_t Node::p2p_port() const { return impl_->transport->port(); }
std::uint16_t Node::rpc_port() const { return impl_->http_port; }
std::string Node::p2p_address() const { return impl_->p2p_address(); }
std::string Node::rpc_address() const { return impl_->rpc_address(); }

NodeStatus Node::apply(const SpecSlice& slice) {
  if (impl_->shut) throw ControlError(503, "node shutting down");
  return impl_->command([&] { return impl_->apply(slice); });
}

NodeStatus Node::start(std::int64_t start_at_ms) {
  if (impl_->shut) throw ControlError(503, "node shutting down");
  return impl_->command([&] { return impl_->start(start_at_ms); });
}

NodeStatus Node::stop(std::uint64_t settle_ms) {
  if (impl_->shut) throw ControlError(503, "node shutting down");
  return impl_->command([&] { return impl_->stop(settle_ms); });
}

NodeStatus Node::status() const { return impl_->snapshot()->status; }
std::shared_ptr<const NodeSnapshot> Node::snapshot() const { return impl_->snapshot(); }
std::optional<std::filesystem::path> Node::log_path(ExperimentId run_id) const { return impl_->find_log(run_id); }
void Node::shutdown() { impl_->shutdown(); }

}  // namespace powlab::node
