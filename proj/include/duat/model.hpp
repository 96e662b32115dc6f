#pragma once

#include <memory>

#include "duat/encoder.hpp"
#include "duat/glsa.hpp"
#include "duat/sba.hpp"

namespace duat {

struct DuatConfig {
  EncoderConfig encoder;
  GlsaArrangement arrangement = GlsaArrangement::parallel;
  bool use_sba = true;
  bool use_glsa = true;
  // Optionally routes the stride-8 decoder level into the semantic stream
  // (off by default: the semantic stream fuses levels three and four).
  bool fuse_f2 = false;
  int input_h = 64;
  int input_w = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

// The two side outputs, both upsampled to input resolution. s1 comes from
// the boundary-refined head and is the final prediction; s2 taps the fused
// semantic stream and receives deep supervision.
struct Prediction {
  Tensor s1;
  Tensor s2;
};

// Full network: encoder -> per-level 64-channel projections -> GLSA pyramid
// -> semantic fusion -> SBA against the projected first level -> two 1x1
// prediction heads.
class DuatModel : public nn::Module {
 public:
  explicit DuatModel(const DuatConfig& cfg);

  Prediction forward(const Tensor& image);
  // Decoder-only entry point (testing seam for dataflow checks).
  Prediction forward_from_pyramid(const FeaturePyramid& p, int img_h, int img_w);

  // sigmoid(s1) thresholded at 0.5; a logit of exactly 0 maps to foreground.
  Tensor predict(const Tensor& image);

  DuatConfig config;

 private:
  Rng init_rng_;  // declared before the layers: the init list draws from it

 public:
  PvtEncoder encoder;
  nn::Conv2d proj1;                     // boundary stream projection to 32
  std::unique_ptr<nn::Conv2d> proj2, proj3, proj4;  // to 64 channels
  std::unique_ptr<GlsaBlock> glsa2, glsa3, glsa4;
  std::unique_ptr<nn::Conv2d> plain2, plain3, plain4;  // 3x3 replacements (w/o GLSA)
  SemanticFuse semantic_fuse;
  std::unique_ptr<nn::Conv2d> f2_fuse;  // only with fuse_f2
  std::unique_ptr<SbaBlock> sba;
  std::unique_ptr<nn::Conv2d> plain_sba;  // 3x3 concat fusion (w/o SBA)
  nn::Conv2d head_s1, head_s2;

 private:
  Tensor decode_level(int level, const Tensor& feature);
};

}  // namespace duat
