#pragma once

#include <stdexcept>
#include <string>

namespace flowfuse {

// Raised when two rasters that must share a grid do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kBadDimensions, kUnsupported };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Bad configuration value or inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowfuse
