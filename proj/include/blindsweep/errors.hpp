#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blindsweep {

// Input outside the mathematical domain of an operation (negative variance, GA out of range).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Malformed call arguments (empty lists, duplicates, bad enums).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. asking a graph for the gradient of a foreign variable.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Aggregation had nothing usable to aggregate.
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Biometry could not find the fetus in any frame.
struct DetectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
        detail_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  // Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

}  // namespace blindsweep
