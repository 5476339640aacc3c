#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dino {

// Invalid EnvConfig / TrainConfig, or a malformed config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation called outside its precondition (e.g. stepping a dead game).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite loss or gradient during training.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string layer, const std::string& what)
      : std::runtime_error(what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

// Replay buffer asked for more samples than it holds.
class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corrupt or unsupported binary file. offset is the byte position where
// decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class UnsupportedVersion : public FormatError {
 public:
  UnsupportedVersion(std::uint64_t offset, unsigned version)
      : FormatError(offset, "unsupported format version " + std::to_string(version)),
        version_(version) {}
  unsigned version() const noexcept { return version_; }

 private:
  unsigned version_;
};

}  // namespace dino
