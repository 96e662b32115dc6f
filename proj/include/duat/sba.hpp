#pragma once

#include "duat/nn.hpp"

namespace duat {

// Re-calibration attention unit: sigmoid gates t1' and t2' from 1x1 convs
// re-weight the two input streams,
//   out = t1' * t1 + t2' * t2 * (1 - t1') + t1,
// where (1 - .) is the reverse operation on the first gate. Asymmetric in
// its arguments by design.
class RauUnit : public nn::Module {
 public:
  RauUnit(int channels, Rng& rng);
  Tensor forward(const Tensor& t1, const Tensor& t2);

  nn::Conv2d gate1, gate2;
  int channels;
};

// Fuses the two deepest decoder maps into the stride-8 semantic stream:
// upsample the deeper map, concat, 1x1 conv to 32 channels, upsample to
// stride 8.
class SemanticFuse : public nn::Module {
 public:
  explicit SemanticFuse(Rng& rng);
  // f3p at stride 16, f4p at stride 32, both 32 channels; target_h/w is the
  // stride-8 grid.
  Tensor forward(const Tensor& f3p, const Tensor& f4p, int target_h, int target_w);

  nn::Conv2d fuse;
};

// Selective boundary aggregation: the semantic stream is upsampled to the
// boundary stream's grid, the two RAU mixes (with swapped argument order)
// are concatenated, and a 3x3 conv + batch norm + ReLU produces the fused
// 32-channel map at the boundary resolution.
class SbaBlock : public nn::Module {
 public:
  explicit SbaBlock(Rng& rng);
  Tensor forward(const Tensor& f_semantic, const Tensor& f_boundary);

  RauUnit rau_sb, rau_bs;
  nn::Conv2d fuse_conv;
  nn::BatchNorm2d fuse_norm;

  static constexpr int kChannels = 32;
};

}  // namespace duat
