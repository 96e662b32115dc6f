#pragma once

#include <memory>
#include <string>

#include "duat/nn.hpp"

namespace duat {

// Which attention units run inside a GLSA block and how they are wired.
// parallel: split 64 channels evenly, GSA on one half, LSA on the other,
// concat and project. Single-unit and serial modes keep the full 64-channel
// map through the unit(s) and project to 32 afterwards.
enum class GlsaArrangement { parallel, gsa_only, lsa_only, serial_gsa_lsa, serial_lsa_gsa };

GlsaArrangement parse_arrangement(const std::string& name);
std::string arrangement_name(GlsaArrangement a);

// Global spatial attention: a softmax over all spatial positions pools the
// map into a per-sample context vector, which an expansion-2 MLP transforms
// and adds back everywhere (residual).
class GsaUnit : public nn::Module {
 public:
  GsaUnit(int channels, Rng& rng);
  Tensor forward(const Tensor& x);

  // The softmax-normalized position weights from the last forward; exposed
  // for verification (positive, sum to one per sample).
  Tensor last_attention() const { return last_attention_; }

  nn::Conv2d att_conv;  // 1x1 to a single attention channel
  nn::MlpExpand2 mlp;
  int channels;

 private:
  Tensor last_attention_;
};

// Local spatial attention: three cascaded [1x1 conv -> 3x3 depthwise conv]
// blocks at constant width, a 1x1 conv whose output is summed with the input
// and squashed into a per-pixel sigmoid gate, applied multiplicatively with
// a residual.
class LsaUnit : public nn::Module {
 public:
  LsaUnit(int channels, Rng& rng);
  Tensor forward(const Tensor& x);

  // Gate map from the last forward, strictly inside (0,1).
  Tensor last_attention() const { return last_attention_; }

  std::vector<std::unique_ptr<nn::Conv2d>> cascade;  // pw/dw pairs
  nn::Conv2d att_conv;
  int channels;

 private:
  Tensor last_attention_;
};

// Global-to-Local Spatial Aggregation over a 64-channel input, producing 32
// channels at the same resolution.
class GlsaBlock : public nn::Module {
 public:
  GlsaBlock(GlsaArrangement arrangement, Rng& rng);
  Tensor forward(const Tensor& x);

  GlsaArrangement arrangement;
  std::unique_ptr<GsaUnit> gsa;
  std::unique_ptr<LsaUnit> lsa;
  nn::Conv2d fuse;  // 1x1 projection to 32 channels

  static constexpr int kInChannels = 64;
  static constexpr int kOutChannels = 32;
  static constexpr int kSplit = 32;
};

}  // namespace duat
