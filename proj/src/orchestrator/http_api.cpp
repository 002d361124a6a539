#include <sstream>
#include <fstream>

#include <httplib.h>

#include "powlab/orchestrator/orchestrator.hpp"
#include "powlab/orchestrator/presets.hpp"

namespace powlab::orch {

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, {{"error", msg}}, status);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ApiError(400, std::string("malformed JSON: ") + e.what());
  }
}

std::uint64_t number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ApiError(400, "bad " + what + " '" + text + "'");
}

template <class T>
T narrow(std::uint64_t v, const std::string& what) {
  if (v > std::numeric_limits<T>::max()) throw ApiError(400, what + " out of range");
  return static_cast<T>(v);
}

std::vector<NodeId> id_list(const std::string& text) {
  std::vector<NodeId> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(narrow<NodeId>(number(item, "node id"), "node id"));
  }
  return out;
}

}  // namespace

struct ApiServer::Impl {
  Orchestrator& orch;
  httplib::Server http;
  std::uint16_t port = 0;
  std::thread thread;

  Impl(Orchestrator& o, const p2p::Endpoint& listen, const std::optional<std::filesystem::path>& ui_dir) : orch(o) {
    routes(ui_dir);
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    std::string host = listen.host.empty() ? "0.0.0.0" : listen.host;
    if (listen.port == 0) {
      int p = http.bind_to_any_port(host);
      if (p <= 0) throw std::system_error(std::make_error_code(std::errc::address_in_use), "listen " + host);
      port = static_cast<std::uint16_t>(p);
    } else {
      if (!http.bind_to_port(host, listen.port)) {
        throw std::system_error(std::make_error_code(std::errc::address_in_use), "listen " + listen.str());
      }
      port = listen.port;
    }
    thread = std::thread([this] { http.listen_after_bind(); });
    http.wait_until_ready();
  }

  ~Impl() { stop(); }

  void stop() {
    http.stop();
    if (thread.joinable()) thread.join();
  }

  template <class Fn>
  static auto guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ApiError& e) {
        send_error(res, e.status(), e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  ExperimentId experiment_param(const httplib::Request& req) {
    return narrow<ExperimentId>(number(req.path_params.at("id"), "experiment id"), "experiment id");
  }

  void routes(const std::optional<std::filesystem::path>& ui_dir) {
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http.Post("/api/nodes/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto a = Announcement::from_json(parse_body(req));
      if (orch.registry().announce(a, wall_ms()) == Registry::Result::conflict) {
        throw ApiError(409, "identity conflict: node " + std::to_string(a.node_id) +
                                " is registered from another address");
      }
      send_json(res, {{"ok", true}, {"heartbeat_ms", Registry::kHeartbeatMs}});
    }));
    http.Post("/api/nodes/heartbeat", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto a = Announcement::from_json(parse_body(req));
      switch (orch.registry().heartbeat(a, wall_ms())) {
        case Registry::Result::ok: return send_json(res, {{"ok", true}});
        case Registry::Result::unknown: throw ApiError(404, "unknown node; register first");
        case Registry::Result::conflict: throw ApiError(409, "identity conflict");
      }
    }));
    http.Get("/api/nodes", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, orch.nodes_json());
    }));

    http.Post("/api/experiments", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto sub = orch.submit(parse_body(req));
      send_json(res, sub.to_json(), sub.violations.empty() ? 200 : 422);
    }));
    http.Get("/api/experiments/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, orch.experiment_json(experiment_param(req)));
    }));
    http.Post("/api/experiments/:id/start", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = experiment_param(req);
      orch.start(id);
      send_json(res, orch.experiment_json(id), 202);
    }));
    http.Post("/api/experiments/:id/stop", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto id = experiment_param(req);
      orch.stop(id);
      send_json(res, orch.experiment_json(id));
    }));
    http.Get("/api/experiments/:id/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, orch.runs_json(experiment_param(req)));
    }));

    http.Get("/api/runs/:run/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto run = narrow<ExperimentId>(number(req.path_params.at("run"), "run id"), "run id");
      auto rec = orch.store().load(run);
      if (!rec) throw ApiError(404, "unknown run " + std::to_string(run));
      send_json(res, rec->to_json());
    }));
    http.Get("/api/runs/:run/logs/:node", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto run = narrow<ExperimentId>(number(req.path_params.at("run"), "run id"), "run id");
      auto node = narrow<NodeId>(number(req.path_params.at("node"), "node id"), "node id");
      auto path = orch.store().log_path(run, node);
      if (!path) throw ApiError(404, "no log for node " + std::to_string(node) + " in run " + std::to_string(run));
      std::ifstream in(*path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      res.set_content(ss.str(), "application/x-ndjson");
    }));

    http.Get("/api/presets", guarded([](const httplib::Request&, httplib::Response& res) {
      send_json(res, preset_names());
    }));
    http.Get("/api/presets/:name", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::vector<NodeId> ids;
      if (req.has_param("nodes")) {
        ids = id_list(req.get_param_value("nodes"));
      } else {
        for (const auto& n : orch.registry().list(wall_ms())) ids.push_back(n.identity.node_id);
      }
      PresetParams p;
      auto opt = [&](const char* key, auto& dst) {
        if (req.has_param(key)) {
          using T = std::decay_t<decltype(dst)>;
          dst = narrow<T>(number(req.get_param_value(key), key), key);
        }
      };
      opt("experiment_id", p.experiment_id);
      opt("duration_s", p.duration_s);
      opt("repetitions", p.repetitions);
      opt("difficulty", p.difficulty);
      opt("worker_count", p.worker_count);
      opt("attempts_per_sec_per_worker", p.attempts_per_sec_per_worker);
      opt("outbound_delay_ms", p.outbound_delay_ms);
      if (req.has_param("victim")) p.victim = narrow<NodeId>(number(req.get_param_value("victim"), "victim"), "victim");
      if (req.has_param("attacker")) {
        p.attacker = narrow<NodeId>(number(req.get_param_value("attacker"), "attacker"), "attacker");
      }
      send_json(res, scenario_preset(req.path_params.at("name"), ids, p).to_json());
    }));

    if (ui_dir) {
      if (!http.set_mount_point("/ui", ui_dir->string())) {
        std::fprintf(stderr, "orchestrator: ui directory %s not found; /ui disabled\n", ui_dir->c_str());
      }
      http.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
    }
  }
};

ApiServer::ApiServer(Orchestrator& orch, const p2p::Endpoint& listen, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(orch, listen, ui_dir)) {}
ApiServer::~ApiServer() = default;
std::uint16_t ApiServer::port() const { return impl_->port; }
void ApiServer::stop() { impl_->stop(); }

}  // namespace powlab::orch
