#pragma once

#include <memory>
#include <vector>

#include "duat/nn.hpp"

namespace duat {

// Encoder outputs at strides 4/8/16/32. f1 is the shallow, high-resolution
// map carrying boundary detail; f2..f4 carry progressively deeper semantics.
struct FeaturePyramid {
  Tensor f1, f2, f3, f4;
};

struct EncoderConfig {
  std::vector<int> depths = {2, 2, 2, 2};
  std::vector<int> dims = {32, 64, 96, 128};
  std::vector<int> heads = {1, 2, 4, 8};
  std::vector<int> sr_ratios = {8, 4, 2, 1};
  int mlp_ratio = 2;

  void validate() const;  // dims divisible by heads, sr ratios powers of two

  // Minimal footprint for finite-difference sweeps.
  static EncoderConfig tiny();
};

// Strided overlapping convolution embedding + layer norm. Stage 1 uses a
// 7x7/4 kernel, later stages 3x3/2.
class PatchEmbed : public nn::Module {
 public:
  PatchEmbed(int in_c, int embed_dim, int kernel, int stride, Rng& rng);
  Tensor forward(const Tensor& x);

  nn::Conv2d proj;
  nn::LayerNorm norm;
  int stride;
};

// Multi-head self-attention with spatial reduction of the key/value grid:
// keys and values come from an r-strided projection of the input, queries
// from every position. Softmax rows sum to one; the input is re-added as a
// residual. Reduction 1 degenerates to dense attention.
class SrAttention : public nn::Module {
 public:
  SrAttention(int dim, int heads, int reduction, Rng& rng);
  Tensor forward(const Tensor& x);

  nn::LayerNorm norm;
  nn::Conv2d q_proj, k_proj, v_proj, out_proj;
  std::unique_ptr<nn::Conv2d> sr;       // present when reduction > 1
  std::unique_ptr<nn::LayerNorm> sr_norm;
  int dim, heads, reduction;
};

// Pre-norm transformer block: attention (with its own residual) followed by
// a depthwise-augmented MLP with residual.
class EncoderBlock : public nn::Module {
 public:
  EncoderBlock(int dim, int heads, int reduction, int mlp_ratio, Rng& rng);
  Tensor forward(const Tensor& x);

  SrAttention attn;
  nn::LayerNorm mlp_norm;
  nn::ConvMlp mlp;
};

class EncoderStage : public nn::Module {
 public:
  EncoderStage(int in_c, int dim, int depth, int heads, int reduction, int mlp_ratio,
               bool first_stage, Rng& rng);
  Tensor forward(const Tensor& x);

  PatchEmbed embed;
  std::vector<std::unique_ptr<EncoderBlock>> blocks;
  nn::LayerNorm out_norm;
};

// Four-stage pyramid transformer over (n,3,h,w) images with h,w divisible
// by 32; stage i output has stride 2^(i+1).
class PvtEncoder : public nn::Module {
 public:
  PvtEncoder(const EncoderConfig& cfg, Rng& rng);
  FeaturePyramid forward(const Tensor& image);

  EncoderConfig config;
  std::vector<std::unique_ptr<EncoderStage>> stages;
};

}  // namespace duat
