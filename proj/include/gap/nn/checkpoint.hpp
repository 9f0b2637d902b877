#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "gap/nn/layers.hpp"

namespace gap::nn {

struct Checkpoint {
  std::vector<ParamGroup> groups;
  nlohmann::json meta;
};

// File layout: one JSON header line {version, meta, groups:[{name, tag,
// tensors:[{name, shape}]}]}, then the raw little-endian 64-bit values in
// declaration order, then an 8-byte FNV-1a checksum of everything before it.
void save_checkpoint(const std::vector<ParamGroup>& groups,
                     const nlohmann::json& meta, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t fnv1a(const std::string& s);

}  // namespace gap::nn
