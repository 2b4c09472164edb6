#pragma once

#include <stdexcept>
#include <string>

namespace dbtmask {

// Input violates a documented precondition or schema rule.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (slice index,
// percentile).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// File contents are structurally broken (truncated payload, RLE overflow).
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File is well formed but its redundant fields disagree (header area vs
// decoded popcount).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dbtmask
