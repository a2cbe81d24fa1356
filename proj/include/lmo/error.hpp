#pragma once

#include <stdexcept>
#include <string>

namespace lmo {

struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

struct staleness_error : std::runtime_error {
  explicit staleness_error(const std::string& what) : std::runtime_error(what) {}
};

struct format_error : std::runtime_error {
  explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// unrecoverable internal state (e.g. training diverged to non-finite values)
struct fault_error : std::runtime_error {
  explicit fault_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lmo
