#pragma once

// Single-file checkpoint:
//   uint64 little-endian header length
//   JSON header {"tensors":[{name, shape, dtype:"float32", byte_offset}], "meta":{...}}
//   raw little-endian float32 payload (offsets relative to payload start)

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "spgraph/nn/tensor.hpp"

namespace spgraph::nn {

struct StoredTensor {
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies stored values into matching parameters; every parameter must be
// present with an identical shape (FormatError otherwise).
void restore_parameters(const Checkpoint& ckpt, std::vector<Parameter>& params);

}  // namespace spgraph::nn
