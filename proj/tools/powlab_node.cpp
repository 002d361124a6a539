// powlab-node: one full node (miner, p2p, JSON-RPC and control endpoints).

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <pthread.h>
#include <system_error>

#include <CLI11.hpp>

#include "powlab/node/node.hpp"

int main(int argc, char** argv) {
  CLI::App app{"powlab full node"};
  powlab::node::NodeOptions opts;
  unsigned node_id = 0;
  std::string p2p = ":0";
  std::string rpc = ":0";
  std::string orchestrator;
  std::string data_dir;
  app.add_option("--node-id", node_id, "Node id (unique per experiment)")->required()->check(CLI::Range(0, 65535));
  app.add_option("--p2p-listen", p2p, "P2P listen address host:port")->capture_default_str();
  app.add_option("--rpc-listen", rpc, "JSON-RPC/control listen address host:port")->capture_default_str();
  app.add_option("--orchestrator-url", orchestrator, "Orchestrator base URL, e.g. http://127.0.0.1:7000");
  app.add_option("--data-dir", data_dir, "Event log directory (default: $POWLAB_DATA_DIR or ./data)");
  app.add_option("--advertise-host", opts.advertise_host, "Host announced to the orchestrator")->capture_default_str();

  try {
    app.parse(argc, argv);
    opts.p2p_listen = powlab::p2p::Endpoint::parse(p2p);
    opts.rpc_listen = powlab::p2p::Endpoint::parse(rpc);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "powlab-node: " << e.what() << "\n";
    return 2;
  }
  opts.node_id = static_cast<powlab::NodeId>(node_id);
  if (!data_dir.empty()) {
    opts.data_dir = data_dir;
  } else if (const char* env = std::getenv("POWLAB_DATA_DIR"); env && *env) {
    opts.data_dir = env;
  }
  if (!orchestrator.empty()) opts.orchestrator_url = orchestrator;

  // Block termination signals before any thread exists; main waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<powlab::node::Node> node;
  try {
    node = std::make_unique<powlab::node::Node>(opts);
  } catch (const std::system_error& e) {
    std::cerr << "powlab-node: " << e.what() << "\n";
    return 2;
  }
  std::printf("node %u p2p=%s rpc=%s\n", node_id, node->p2p_address().c_str(), node->rpc_address().c_str());
  std::fflush(stdout);

  int sig = 0;
  sigwait(&signals, &sig);
  node->shutdown();
  return 0;
}
