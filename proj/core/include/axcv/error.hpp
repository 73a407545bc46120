#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace axcv {

/// Invalid multiplier / array / experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand lengths or tensor shapes that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An accumulator exceeded its declared hardware width. Adders are sized so
/// that this never happens for valid inputs, so a fault means a sizing bug.
class SimulatorFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model or dataset file. `offset()` is the byte position at which
/// decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace axcv
