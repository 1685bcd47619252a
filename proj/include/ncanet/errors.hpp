#pragma once

#include <stdexcept>
#include <string>

namespace ncanet {

// Shape or rank mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed anywhere in the pipeline.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system, PNG decode, dataset layout problems.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint magic/version mismatch.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An attention map that would not fit the configured guard.
class FootprintError : public std::runtime_error {
 public:
  FootprintError(const std::string& what, unsigned long long required_bytes)
      : std::runtime_error(what), required_bytes_(required_bytes) {}
  unsigned long long required_bytes() const { return required_bytes_; }

 private:
  unsigned long long required_bytes_;
};

}  // namespace ncanet
