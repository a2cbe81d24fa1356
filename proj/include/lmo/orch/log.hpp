#pragma once

#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"

namespace lmo::orch {

using json = nlohmann::json;

struct LogEntry {
  std::uint64_t seq{0};
  std::string kind;
  json detail;
};

// Append-only event log with an optional NDJSON file sink. Everything the
// service decides (rejects, checker verdicts, emissions, feedback) lands
// here so tests and the replay tool can audit behavior.
class EventLog {
 public:
  void open_file(const std::string& path) {
    std::lock_guard lock(mu_);
    file_.open(path, std::ios::app);
    if (!file_) throw io_error("cannot open log file: " + path);
  }

  std::uint64_t append(const std::string& kind, json detail = json::object()) {
    std::lock_guard lock(mu_);
    LogEntry e{next_seq_++, kind, std::move(detail)};
    if (file_.is_open()) {
      json line = e.detail;
      line["seq"] = e.seq;
      line["kind"] = e.kind;
      file_ << line.dump() << '\n';
      file_.flush();
    }
    entries_.push_back(std::move(e));
    return entries_.back().seq;
  }

  std::vector<LogEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  std::size_t count(const std::string& kind) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.kind == kind) ++n;
    return n;
  }

 private:
  mutable std::mutex mu_;
  std::vector<LogEntry> entries_;
  std::uint64_t next_seq_{0};
  std::ofstream file_;
};

}  // namespace lmo::orch
