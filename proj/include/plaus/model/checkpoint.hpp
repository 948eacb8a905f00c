#pragma once

// Checkpoint container:
//   8-byte magic "PLAUSCK1"
//   u64 little-endian header length, then a JSON header with the model
//   config, vocabulary, and a table of {name, shape, offset} per tensor
//   raw little-endian float64 payload in table order
// Write-then-read reproduces every weight bit-for-bit.

#include <filesystem>
#include <string>
#include <vector>

#include "plaus/model/transformer.hpp"

namespace plaus {

struct Checkpoint {
  Transformer model;
  std::vector<std::string> vocab;
};

void save_checkpoint(const std::filesystem::path& path, const Transformer& model,
                     const std::vector<std::string>& vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Serialized bytes, exposed for byte-level comparisons.
std::string checkpoint_bytes(const Transformer& model, const std::vector<std::string>& vocab);

}  // namespace plaus
