#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dualflow/config.hpp"
#include "dualflow/data.hpp"
#include "dualflow/tensor.hpp"

namespace dualflow {

// Directory layout: manifest.json plus one little-endian float64 blob per
// tensor. Saving the result of a load is byte-identical.
struct Checkpoint {
  int format_version = 1;
  int step = 0;
  RunConfig config;
  std::string rng_state;
  std::optional<Normalizer> normalizer;
  std::vector<std::pair<std::string, Tensor>> tensors;  // manifest order

  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace dualflow
