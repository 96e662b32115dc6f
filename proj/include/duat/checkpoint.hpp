#pragma once

#include <string>
#include <vector>

#include "duat/nn.hpp"

namespace duat {

// Flat binary parameter container. Layout, all integers little-endian:
//   magic "DUATCKPT" | u32 version (1) | u32 record count
//   per record: u32 name length | name bytes | u8 dtype (0 = f32, 1 = f64)
//               | 4 x u32 shape (n,c,h,w) | raw scalars
// The dtype follows the engine precision at save time; in f32 mode every
// stored value is float-representable, so round-trips are bit-exact in both
// modes.
void save_checkpoint(const std::string& path, const std::vector<nn::Module::NamedTensor>& params,
                     const std::vector<nn::Module::NamedTensor>& buffers);

// Loads a checkpoint into existing tensors, matching strictly by name and
// shape. Throws DataError on malformed files or mismatches.
void load_checkpoint(const std::string& path, const std::vector<nn::Module::NamedTensor>& params,
                     const std::vector<nn::Module::NamedTensor>& buffers);

// Convenience pair for whole modules.
void save_checkpoint(const std::string& path, nn::Module& m);
void load_checkpoint(const std::string& path, nn::Module& m);

}  // namespace duat
