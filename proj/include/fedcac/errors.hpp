#pragma once

#include <stdexcept>
#include <string>

namespace fedcac {

// Invalid configuration or mismatched model/mask structures supplied by a caller.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad training data: labels out of range, empty shards, ...
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A partitioner could not satisfy the requested shard quotas.
struct PartitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed wire payloads (truncated or trailing bytes).
struct SerializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A broken internal invariant; indicates a bug, not a user error.
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fedcac
