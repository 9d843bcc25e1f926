#pragma once

#include <map>
#include <string>

#include "dcnav/optim.hpp"
#include "dcnav/tensor.hpp"

namespace dcnav {

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary layout, all integers little-endian:
//   magic "DCNV" | version u32 | count u32
//   per parameter: name_len u32 | name bytes | rank u32 | dims u64[rank] | f64 payload
void save_checkpoint(const std::string& path, const ParamStore& params);

std::map<std::string, Tensor> read_checkpoint(const std::string& path);

// Loads values into an existing store; every name and shape must match.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace dcnav
