#pragma once

#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "lmo/net.hpp"
#include "lmo/orch/core.hpp"
#include "lmo/wire.hpp"

namespace lmo::orch {

// TCP shell around the core: accepts NDJSON peers, greets each with the
// subscription request, feeds inbound lines to the core, and broadcasts
// emitted recommendations to every live peer (FIFO per connection). Can
// also dial out to a gateway, which then behaves like any accepted peer.
class OrchestratorServer {
 public:
  OrchestratorServer(OrchestratorCore& core, const std::string& bind_addr,
                     int port)
      : core_(core) {
    listen_fd_ = net::listen_on(bind_addr, port);
    port_ = net::bound_port(listen_fd_);
    core_.set_sink([this](const std::string& line) { broadcast(line); });
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~OrchestratorServer() { stop(); }

  int port() const { return port_; }

  void connect_gateway(const std::string& host, int port) {
    adopt(net::connect_to(host, port));
  }

  std::size_t connections() const {
    std::lock_guard lock(conns_mu_);
    return conns_.size();
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    {
      std::lock_guard lock(conns_mu_);
      for (const auto& c : conns_) c->shut();
    }
    std::unique_lock lock(conns_mu_);
    readers_done_.wait(lock, [this] { return active_readers_ == 0; });
    conns_.clear();
  }

 private:
  // The fd is closed exactly once, when the last reference (reader thread,
  // broadcast snapshot, or connection list) lets go.
  struct Conn {
    int fd{-1};
    std::mutex write_mu;
    std::atomic<bool> open{true};

    void shut() {
      if (open.exchange(false)) ::shutdown(fd, SHUT_RDWR);
    }

    ~Conn() {
      if (fd >= 0) ::close(fd);
    }
  };

  void accept_loop() {
    while (!stopped_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (stopped_) return;
        continue;
      }
      net::set_nodelay(fd);
      adopt(fd);
    }
  }

  void adopt(int fd) {
    auto conn = std::make_shared<Conn>();
    conn->fd = fd;
    {
      std::lock_guard lock(conns_mu_);
      conns_.push_back(conn);
      ++active_readers_;
    }
    wire::SubscriptionRequest sub;
    sub.boundary = core_.config().lane.boundary;
    write_line(*conn, wire::to_line(sub));
    std::thread([this, conn] { reader_loop(conn); }).detach();
  }

  void reader_loop(const std::shared_ptr<Conn>& conn) {
    net::LineReader reader(conn->fd, wire::kMaxLineBytes);
    try {
      while (conn->open) {
        const auto line = reader.next_line();
        if (!line) break;
        core_.handle_line(*line);
      }
    } catch (const io_error& e) {
      core_.log().append("connection_error", {{"detail", e.what()}});
    }
    conn->shut();
    {
      std::lock_guard lock(conns_mu_);
      if (!stopped_) conns_.remove(conn);
      --active_readers_;
    }
    readers_done_.notify_all();
  }

  bool write_line(Conn& conn, const std::string& line) {
    std::lock_guard lock(conn.write_mu);
    if (!conn.open) return false;
    if (net::send_all(conn.fd, line)) return true;
    // one retry, then give up on this peer for this line
    if (net::send_all(conn.fd, line)) return true;
    core_.log().append("emit_write_failed", {});
    return false;
  }

  void broadcast(const std::string& line) {
    std::list<std::shared_ptr<Conn>> conns;
    {
      std::lock_guard lock(conns_mu_);
      conns = conns_;
    }
    for (const auto& c : conns) write_line(*c, line);
  }

  OrchestratorCore& core_;
  int listen_fd_{-1};
  int port_{0};
  std::thread acceptor_;
  mutable std::mutex conns_mu_;
  std::condition_variable readers_done_;
  std::list<std::shared_ptr<Conn>> conns_;
  int active_readers_{0};
  std::atomic<bool> stopped_{false};
};

}  // namespace lmo::orch
