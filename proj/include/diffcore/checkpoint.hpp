#pragma once

#include <cstdint>
#include <string>

#include "diffcore/params.hpp"

namespace diffcore {

// Checkpoint container: little-endian, bit-exact round trip.
//   magic "MDCKPT01" | u32 format version | u64 config digest | u64 step count
//   u32 parameter count, then per parameter (sorted by name):
//     u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 data[]
struct CheckpointMeta {
    std::uint32_t version = 1;
    std::uint64_t config_digest = 0;
    std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const ParamStore& params, const CheckpointMeta& meta);
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params);

// FNV-1a over a canonical config string; stored in the header so loaders can
// reject checkpoints produced under a different layout.
std::uint64_t config_digest(const std::string& canonical);

}  // namespace diffcore
