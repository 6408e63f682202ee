#pragma once

#include <string>

#include "streamdit/tensor.hpp"

namespace streamdit {

// Little-endian flat binary: magic "SDCK", u32 version, u64 tensor count,
// then per tensor: u32 name length, name bytes, u32 rank, u64 extents,
// raw fp64 payload. Round-trips byte-exactly.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

}  // namespace streamdit
