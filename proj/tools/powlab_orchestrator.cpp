// powlab-orchestrator: control plane server, headless experiment runner and
// offline run reports.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "powlab/orchestrator/orchestrator.hpp"

namespace {

using powlab::orch::json;

enum Exit { kOk = 0, kValidation = 1, kUsage = 2, kAborted = 3 };

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

/// One row per run: run, head_height, leader, leader_pct, uncle_rate, converged.
void print_table(const json& runs, std::ostream& out) {
  out << std::left << std::setw(10) << "run" << std::setw(13) << "head_height" << std::setw(8) << "leader"
      << std::setw(12) << "leader_pct" << std::setw(12) << "uncle_rate" << "converged\n";
  for (const auto& r : runs) {
    const auto& m = r.at("metrics");
    const auto& agg = r.at("aggregate");
    std::string leader = m.at("leader").is_null() ? "-" : std::to_string(m.at("leader").get<int>());
    std::string converged;
    if (r.value("aborted", false)) {
      converged = "aborted: " + r.value("abort_reason", std::string());
    } else if (agg.at("convergence_time_ms").is_null()) {
      converged = "no";
    } else {
      converged = "yes (" + std::to_string(agg.at("convergence_time_ms").get<long long>()) + " ms)";
    }
    auto incomplete = r.value("incomplete_nodes", json::array());
    if (!incomplete.empty() && !r.value("aborted", false)) converged += "  incomplete: " + incomplete.dump();
    out << std::left << std::setw(10) << r.at("run_id").get<long long>() << std::setw(13)
        << m.at("head_height").get<long long>() << std::setw(8) << leader << std::setw(12)
        << fixed(m.at("leader_pct").get<double>(), 1) << std::setw(12) << fixed(m.at("uncle_rate").get<double>(), 3)
        << converged << "\n";
  }
}

int serve(const std::string& listen, const std::string& data_dir, const std::string& ui_dir,
          powlab::orch::OrchestratorOptions opts) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  opts.data_dir = data_dir;
  std::unique_ptr<powlab::orch::Orchestrator> orch;
  std::unique_ptr<powlab::orch::ApiServer> server;
  try {
    auto ep = powlab::p2p::Endpoint::parse(listen);
    orch = std::make_unique<powlab::orch::Orchestrator>(opts);
    std::optional<std::filesystem::path> ui;
    if (!ui_dir.empty()) ui = ui_dir;
    server = std::make_unique<powlab::orch::ApiServer>(*orch, ep, ui);
  } catch (const std::exception& e) {
    std::cerr << "powlab-orchestrator: " << e.what() << "\n";
    return kUsage;
  }
  std::printf("orchestrator listening on port %u, data in %s\n", server->port(), data_dir.c_str());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&signals, &sig);
  server->stop();
  return kOk;
}

int run_experiment(const std::string& spec_path, const std::string& url, bool as_json) {
  std::ifstream in(spec_path);
  if (!in) {
    std::cerr << "cannot read " << spec_path << "\n";
    return kUsage;
  }
  json spec = json::parse(in, nullptr, false);
  if (spec.is_discarded()) {
    std::cerr << spec_path << ": not valid JSON\n";
    return kUsage;
  }
  httplib::Client client(url);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(30, 0);

  auto sub = client.Post("/api/experiments", spec.dump(), "application/json");
  if (!sub) {
    std::cerr << "orchestrator unreachable at " << url << "\n";
    return kUsage;
  }
  auto verdict = json::parse(sub->body, nullptr, false);
  if (sub->status == 422) {
    std::cerr << "spec rejected:\n";
    for (const auto& v : verdict.value("violations", json::array())) {
      std::cerr << "  " << v.value("field", "") << ": " << v.value("reason", "") << "\n";
    }
    return kValidation;
  }
  if (sub->status != 200) {
    std::cerr << "submit failed (" << sub->status << "): " << sub->body << "\n";
    return kUsage;
  }
  auto id = std::to_string(verdict.at("experiment_id").get<unsigned long>());
  auto started = client.Post("/api/experiments/" + id + "/start", "", "application/json");
  if (!started || started->status != 202) {
    std::cerr << "start failed: " << (started ? started->body : std::string("no response")) << "\n";
    return started && started->status == 422 ? kValidation : kUsage;
  }

  std::string last_line;
  json runs;
  int misses = 0;
  while (true) {
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    auto st = client.Get("/api/experiments/" + id);
    if (!st) {
      if (++misses > 20) {
        std::cerr << "lost contact with the orchestrator\n";
        return kUsage;
      }
      continue;
    }
    misses = 0;
    auto j = json::parse(st->body, nullptr, false);
    auto state = j.value("state", std::string());
    std::string line = "experiment " + id + ": " + state + ", " + std::to_string(j.value("runs_completed", 0)) + "/" +
                       std::to_string(j.value("repetitions", 0)) + " runs";
    if (j.contains("progress") && j["progress"].is_object()) {
      line += ", run " + std::to_string(j["progress"].value("run_id", 0)) + " " + j["progress"].value("phase", "");
    }
    if (line != last_line) std::cerr << line << "\n";
    last_line = line;
    if (state != "running") {
      auto r = client.Get("/api/experiments/" + id + "/runs");
      if (!r) continue;
      runs = json::parse(r->body);
      if (!j.value("error", std::string()).empty()) std::cerr << j["error"].get<std::string>() << "\n";
      if (as_json) {
        std::cout << runs.dump(2) << "\n";
      } else {
        print_table(runs.at("runs"), std::cout);
      }
      return state == "completed" ? kOk : kAborted;
    }
  }
}

int report(unsigned long run_id, const std::string& data_dir, bool as_json) {
  try {
    powlab::orch::RunStore store(data_dir);
    auto rec = store.load(static_cast<powlab::ExperimentId>(run_id));
    if (!rec) {
      std::cerr << "no run " << run_id << " under " << data_dir << "\n";
      return kUsage;
    }
    auto recomputed = store.reaggregate(*rec);
    bool same = recomputed == rec->aggregate;
    rec->aggregate = recomputed;
    auto j = rec->to_json();
    j["matches_stored"] = same;
    if (as_json) {
      std::cout << j.dump(2) << "\n";
    } else {
      print_table(json::array({j}), std::cout);
      std::cout << "\ncontributions (reference node " << j["aggregate"]["reference_node"].dump() << "):\n";
      for (const auto& [node, pct] : j["metrics"]["contributions"].items()) {
        std::cout << "  node " << node << ": " << fixed(pct.get<double>(), 1) << "%\n";
      }
      std::cout << "uncles: " << j["metrics"]["uncle_count"] << ", canonical blocks: "
                << j["metrics"]["total_canonical"] << "\n";
      if (!same) std::cout << "warning: recomputed aggregate differs from the stored record\n";
    }
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"powlab orchestrator"};
  app.require_subcommand(0, 1);

  std::string listen = ":7000";
  std::string data_dir;
  std::string ui_dir;
  powlab::orch::OrchestratorOptions opts;
  app.add_option("--listen", listen, "HTTP listen address host:port")->capture_default_str();
  app.add_option("--data-dir", data_dir, "Run records and collected logs (default: $POWLAB_DATA_DIR or ./orchestrator-data)");
  app.add_option("--ui-dir", ui_dir, "Built control UI served under /ui");
  app.add_option("--settle-ms", opts.settle_ms, "Relay window after stop before logs are final")->capture_default_str();
  app.add_option("--start-lead-ms", opts.start_lead_ms, "Delay between start command and shared start")
      ->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "Experiment commands");
  experiment->require_subcommand(1);
  auto* run = experiment->add_subcommand("run", "Submit a spec file, run every repetition, print metrics");
  std::string spec_path;
  std::string url = "http://127.0.0.1:7000";
  bool run_json = false;
  run->add_option("spec", spec_path, "ExperimentSpec JSON file")->required();
  run->add_option("--url", url, "Orchestrator base URL")->capture_default_str();
  run->add_flag("--json", run_json, "Machine-readable output");

  auto* rep = app.add_subcommand("report", "Re-aggregate a stored run from its logs");
  unsigned long run_id = 0;
  std::string report_dir;
  bool report_json = false;
  rep->add_option("run_id", run_id, "Run id")->required();
  rep->add_option("--data-dir", report_dir, "Orchestrator data directory");
  rep->add_flag("--json", report_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto default_dir = [](const std::string& given) {
    if (!given.empty()) return given;
    if (const char* env = std::getenv("POWLAB_DATA_DIR"); env && *env) return std::string(env);
    return std::string("orchestrator-data");
  };

  if (run->parsed()) return run_experiment(spec_path, url, run_json);
  if (rep->parsed()) return report(run_id, default_dir(report_dir.empty() ? data_dir : report_dir), report_json);
  return serve(listen, default_dir(data_dir), ui_dir, opts);
}
