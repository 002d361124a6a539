#include "powlab/p2p/transport.hpp"

#include <array>
#include <atomic>
#include <boost/asio.hpp>
#include <chrono>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "powlab/p2p/gossip.hpp"
#include "powlab/util/bytes.hpp"

namespace powlab::p2p {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

Endpoint Endpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("expected host:port, got '" + std::string(text) + "'");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  auto port = text.substr(colon + 1);
  if (port.empty()) throw std::invalid_argument("missing port in '" + std::string(text) + "'");
  unsigned long value = 0;
  for (char c : port) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad port in '" + std::string(text) + "'");
    value = value * 10 + static_cast<unsigned long>(c - '0');
    if (value > 65535) throw std::invalid_argument("port out of range in '" + std::string(text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

namespace {

std::uint64_t now_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now().time_since_epoch()).count());
}

tcp::endpoint resolve(asio::io_context& ioc, const Endpoint& ep) {
  auto host = ep.host.empty() ? std::string("0.0.0.0") : ep.host;
  tcp::resolver resolver(ioc);
  auto results = resolver.resolve(tcp::v4(), host, std::to_string(ep.port));
  return results.begin()->endpoint();
}

}  // namespace

struct Transport::Impl {
  struct Connection {
    Connection(asio::io_context& ioc, ConnId id_, std::optional<NodeId> dialed_)
        : socket(ioc), timer(ioc), id(id_), dialed(dialed_) {}

    tcp::socket socket;
    asio::steady_timer timer;
    ConnId id;
    std::optional<NodeId> dialed;
    std::uint64_t generation = 0;
    OutboundQueue queue;
    bool writing = false;
    bool waiting = false;
    bool closed = false;
    std::array<std::uint8_t, kFrameHeaderBytes> header{};
    std::vector<std::uint8_t> payload;
  };
  using ConnPtr = std::shared_ptr<Connection>;

  Impl(const Endpoint& listen, Handlers h) : handlers(std::move(h)), acceptor(ioc), guard(ioc.get_executor()) {
    try {
      auto ep = resolve(ioc, listen);
      acceptor.open(ep.protocol());
      acceptor.set_option(tcp::acceptor::reuse_address(true));
      acceptor.bind(ep);
      acceptor.listen();
    } catch (const boost::system::system_error& e) {
      throw std::system_error(std::error_code(e.code().value(), std::system_category()), "p2p listen " + listen.str());
    }
    bound_port = acceptor.local_endpoint().port();
    accept();
    thread = std::thread([this] { ioc.run(); });
  }

  ~Impl() {
    asio::post(ioc, [this] {
      boost::system::error_code ec;
      acceptor.close(ec);
      targets.clear();
      ++generation;
      auto all = conns;
      for (auto& [id, c] : all) drop(c, "shutdown");
      for (auto& t : redial_timers) t->cancel();
      guard.reset();
    });
    thread.join();
  }

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != asio::error::operation_aborted) accept();
        return;
      }
      socket.set_option(tcp::no_delay(true));
      auto c = std::make_shared<Connection>(ioc, next_id++, std::nullopt);
      c->socket = std::move(socket);
      c->generation = generation;
      conns.emplace(c->id, c);
      if (handlers.opened) handlers.opened(c->id, std::nullopt);
      read_header(c);
      accept();
    });
  }

  void dial(NodeId peer, std::uint64_t gen) {
    if (gen != generation || !targets.contains(peer)) return;
    auto c = std::make_shared<Connection>(ioc, next_id++, peer);
    c->generation = gen;
    tcp::endpoint ep;
    try {
      ep = resolve(ioc, targets.at(peer));
    } catch (const std::exception&) {
      schedule_redial(peer, gen);
      return;
    }
    c->socket.async_connect(ep, [this, c, peer, gen](boost::system::error_code ec) {
      if (gen != generation) return;
      if (ec) {
        schedule_redial(peer, gen);
        return;
      }
      boost::system::error_code opt_ec;
      c->socket.set_option(tcp::no_delay(true), opt_ec);
      conns.emplace(c->id, c);
      if (handlers.opened) handlers.opened(c->id, peer);
      read_header(c);
    });
  }

  void schedule_redial(NodeId peer, std::uint64_t gen) {
    auto timer = std::make_shared<asio::steady_timer>(ioc, std::chrono::milliseconds(kRedialMs));
    redial_timers.push_back(timer);
    timer->async_wait([this, timer, peer, gen](boost::system::error_code ec) {
      std::erase(redial_timers, timer);
      if (!ec) dial(peer, gen);
    });
  }

  void read_header(const ConnPtr& c) {
    asio::async_read(c->socket, asio::buffer(c->header), [this, c](boost::system::error_code ec, std::size_t) {
      if (c->closed) return;
      if (ec) return drop(c, ec == asio::error::eof ? "peer closed" : ec.message());
      FrameHeader fh;
      try {
        fh = decode_frame_header(c->header);
      } catch (const DecodeError& e) {
        return drop(c, std::string("malformed frame: ") + e.what());
      }
      c->payload.resize(fh.payload_length);
      asio::async_read(c->socket, asio::buffer(c->payload), [this, c, fh](boost::system::error_code ec2, std::size_t) {
        if (c->closed) return;
        if (ec2) return drop(c, ec2.message());
        WireMessage msg;
        try {
          msg = decode_payload(fh, c->payload);
        } catch (const DecodeError& e) {
          return drop(c, std::string("malformed frame: ") + e.what());
        }
        if (handlers.message) handlers.message(c->id, std::move(msg));
        if (!c->closed) read_header(c);
      });
    });
  }

  void pump(const ConnPtr& c) {
    if (c->closed || c->writing || c->waiting || c->queue.empty()) return;
    auto now = now_ms();
    if (!c->queue.ready(now)) {
      c->waiting = true;
      c->timer.expires_after(std::chrono::milliseconds(c->queue.front().release_ms - now));
      c->timer.async_wait([this, c](boost::system::error_code) {
        c->waiting = false;
        pump(c);
      });
      return;
    }
    c->writing = true;
    auto item = std::make_shared<OutboundQueue::Item>(c->queue.pop());
    asio::async_write(c->socket, asio::buffer(item->bytes), [this, c, item](boost::system::error_code ec, std::size_t) {
      c->writing = false;
      if (c->closed) return;
      if (ec) return drop(c, "send failed: " + ec.message());
      pump(c);
    });
  }

  void drop(ConnPtr c, const std::string& reason) {  // by value: erase below may release the caller's copy
    if (c->closed) return;
    c->closed = true;
    boost::system::error_code ec;
    c->socket.shutdown(tcp::socket::shutdown_both, ec);
    c->socket.close(ec);
    c->timer.cancel();
    c->queue.clear();
    conns.erase(c->id);
    if (handlers.closed) handlers.closed(c->id, reason);
    if (c->dialed && c->generation == generation && targets.contains(*c->dialed)) {
      schedule_redial(*c->dialed, c->generation);
    }
  }

  Handlers handlers;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::executor_work_guard<asio::io_context::executor_type> guard;
  std::thread thread;
  std::uint16_t bound_port = 0;

  // Touched only on the I/O thread.
  std::unordered_map<ConnId, ConnPtr> conns;
  std::map<NodeId, Endpoint> targets;
  std::vector<std::shared_ptr<asio::steady_timer>> redial_timers;
  std::uint64_t generation = 0;
  ConnId next_id = 1;

  std::atomic<std::uint64_t> delay_ms{0};
};

Transport::Transport(const Endpoint& listen, Handlers handlers)
    : impl_(std::make_unique<Impl>(listen, std::move(handlers))) {}

Transport::~Transport() = default;

std::uint16_t Transport::port() const { return impl_->bound_port; }

void Transport::set_outbound_delay(std::uint64_t delay_ms) { impl_->delay_ms = delay_ms; }

void Transport::connect_to(std::map<NodeId, Endpoint> targets) {
  asio::post(impl_->ioc, [impl = impl_.get(), targets = std::move(targets)]() mutable {
    ++impl->generation;
    for (auto& t : impl->redial_timers) t->cancel();
    impl->targets = std::move(targets);
    auto all = impl->conns;
    for (auto& [id, c] : all) impl->drop(c, "reconfigured");
    for (const auto& [peer, ep] : impl->targets) impl->dial(peer, impl->generation);
  });
}

void Transport::send(ConnId conn, const WireMessage& msg) {
  auto bytes = encode_frame(msg);
  auto queued_at = now_ms();
  asio::post(impl_->ioc, [impl = impl_.get(), conn, bytes = std::move(bytes), queued_at]() mutable {
    auto it = impl->conns.find(conn);
    if (it == impl->conns.end()) return;
    it->second->queue.push(std::move(bytes), queued_at, impl->delay_ms.load());
    impl->pump(it->second);
  });
}

void Transport::close(ConnId conn, std::string reason) {
  asio::post(impl_->ioc, [impl = impl_.get(), conn, reason = std::move(reason)] {
    auto it = impl->conns.find(conn);
    if (it != impl->conns.end()) impl->drop(it->second, reason);
  });
}

}  // namespace powlab::p2p
