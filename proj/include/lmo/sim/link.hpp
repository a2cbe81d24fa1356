#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/net.hpp"
#include "lmo/orch/core.hpp"
#include "lmo/wire.hpp"

namespace lmo::sim {

// Transport between the simulator and an orchestrator. `send` delivers one
// NDJSON line; `drain` collects every reply line the orchestrator has
// produced, waiting until the stream has been silent for `quiesce_ms`.
class OrchLink {
 public:
  virtual ~OrchLink() = default;
  virtual wire::Boundary boundary() const = 0;
  virtual void send(const std::string& line) = 0;
  virtual std::vector<std::string> drain(int quiesce_ms) = 0;
};

// Runs an OrchestratorCore in-process. Computations happen inline on the
// sending thread, so replies are already buffered when `drain` is called.
class InprocLink : public OrchLink {
 public:
  InprocLink(orch::OrchestratorConfig config,
             std::optional<rl::DuelingNetwork> model)
      : core_((config.workers = 0, std::move(config)), std::move(model)) {
    core_.set_sink([this](const std::string& line) { pending_.push_back(line); });
  }

  wire::Boundary boundary() const override {
    return core_.config().lane.boundary;
  }

  void send(const std::string& line) override { core_.handle_line(line); }

  std::vector<std::string> drain(int) override {
    return std::exchange(pending_, {});
  }

  orch::OrchestratorCore& core() { return core_; }

 private:
  orch::OrchestratorCore core_;
  std::vector<std::string> pending_;
};

// Connects to a live orchestrator over TCP. The orchestrator greets new
// peers with a subscription_request carrying its boundary.
class TcpLink : public OrchLink {
 public:
  TcpLink(const std::string& host, int port, int greeting_timeout_ms = 5000)
      : fd_(net::connect_to(host, port)) {
    const auto greeting = read_line(greeting_timeout_ms);
    if (!greeting)
      throw io_error("no greeting from orchestrator within timeout");
    const wire::Inbound msg = wire::parse_line(*greeting);
    const auto* sub = std::get_if<wire::SubscriptionRequest>(&msg);
    if (sub == nullptr)
      throw format_error("expected subscription_request greeting, got: " +
                         *greeting);
    boundary_ = sub->boundary;
  }

  ~TcpLink() override {
    if (fd_ >= 0) ::close(fd_);
  }

  TcpLink(const TcpLink&) = delete;
  TcpLink& operator=(const TcpLink&) = delete;

  wire::Boundary boundary() const override { return boundary_; }

  void send(const std::string& line) override {
    if (!net::send_all(fd_, line + "\n"))
      throw io_error("orchestrator connection lost on send");
  }

  std::vector<std::string> drain(int quiesce_ms) override {
    std::vector<std::string> lines;
    split_buffered(lines);
    while (true) {
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, quiesce_ms);
      if (rc < 0) throw io_error("poll failed on orchestrator link");
      if (rc == 0) return lines;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) throw io_error("orchestrator connection closed");
      buf_.append(chunk, static_cast<std::size_t>(n));
      split_buffered(lines);
    }
  }

 private:
  std::optional<std::string> read_line(int timeout_ms) {
    while (true) {
      const auto pos = buf_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc <= 0) return std::nullopt;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void split_buffered(std::vector<std::string>& out) {
    std::size_t pos;
    while ((pos = buf_.find('\n')) != std::string::npos) {
      std::string line = buf_.substr(0, pos);
      buf_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      out.push_back(std::move(line));
    }
  }

  int fd_{-1};
  std::string buf_;
  wire::Boundary boundary_;
};

}  // namespace lmo::sim
