#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feddae/tensor.hpp"

namespace feddae {

// One named tensor: shape + row-major doubles. A DenseNet with L layers
// serializes as "<prefix>.layer<l>.w" (in x out) and "<prefix>.layer<l>.b".
struct NamedTensor {
  std::string name;
  std::vector<uint64_t> shape;
  Vector data;
};

// Flat binary container: magic "FDAE", format version, a JSON metadata
// string, then the tensor table. Doubles are written raw (little-endian
// IEEE-754), so save -> load round-trips bit-exactly.
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<NamedTensor>& tensors);

struct Checkpoint {
  std::string meta_json;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  // Throws if absent or shaped differently.
  const NamedTensor& require(const std::string& name,
                             const std::vector<uint64_t>& shape) const;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace feddae
