#pragma once

#include <map>
#include <string>

#include "t2v/tensor.hpp"

namespace t2v {

// On-disk layout (little-endian, bit-exact):
//   magic "MST2VCKP" | u32 version=1 | u32 tensor count
//   per tensor: u16 name length, name bytes, u8 rank, rank x u64 dims,
//               row-major float32 data
//   u32 config block length, "key=value\n" lines (sorted)
//   u32 CRC-32 of all preceding bytes
struct Checkpoint {
    uint32_t version = 1;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> config;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace t2v
