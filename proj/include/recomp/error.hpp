#pragma once

#include <stdexcept>
#include <string>

namespace recomp {

/// Invalid configuration or argument supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problems with persisted data. Each failure mode has its own kind so callers
/// (and tests) can tell a truncated file from an unsupported schema.
class DataError : public std::runtime_error {
 public:
  enum class Kind { kMissingFile, kChecksum, kLength, kSchema, kModalityMissing, kFormat };

  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace recomp
