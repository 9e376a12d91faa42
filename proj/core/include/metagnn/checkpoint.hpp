#pragma once

#include <filesystem>

#include "metagnn/gnn.hpp"

namespace metagnn {

// Binary layout (all integers little-endian):
//   "MGNNCKPT" | u32 version | u32 array count
//   per array: u32 name length | name bytes | u32 rank | u64 dims[rank]
//              | f64 values[prod(dims)]
// The architecture goes to a JSON manifest next to it: "<path>.json".

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace metagnn
