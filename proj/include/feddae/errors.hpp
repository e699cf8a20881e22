#pragma once

#include <stdexcept>
#include <string>

namespace feddae {

// Rejected input: shape/dimension mismatches between tensors or nets.
struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite value reached an optimizer or loss; names the offending tensor.
struct poisoned_update_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration (bad flag value, infeasible sampling, ...).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset could not be ingested (unreadable, too many malformed lines, ...).
struct ingestion_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric requested over an empty result set.
struct metric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace feddae
