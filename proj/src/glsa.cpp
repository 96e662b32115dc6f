#include "duat/glsa.hpp"

namespace duat {

using ops::add;
using ops::concat_channels;
using ops::matmul;
using ops::mul;
using ops::reshape;
using ops::sigmoid;
using ops::softmax;
using ops::split_channels;
using ops::transpose_hw;

GlsaArrangement parse_arrangement(const std::string& name) {
  if (name == "parallel") return GlsaArrangement::parallel;
  if (name == "gsa_only") return GlsaArrangement::gsa_only;
  if (name == "lsa_only") return GlsaArrangement::lsa_only;
  if (name == "serial_gsa_lsa") return GlsaArrangement::serial_gsa_lsa;
  if (name == "serial_lsa_gsa") return GlsaArrangement::serial_lsa_gsa;
  throw DataError("unknown glsa arrangement '" + name + "'");
}

std::string arrangement_name(GlsaArrangement a) {
  switch (a) {
    case GlsaArrangement::parallel: return "parallel";
    case GlsaArrangement::gsa_only: return "gsa_only";
    case GlsaArrangement::lsa_only: return "lsa_only";
    case GlsaArrangement::serial_gsa_lsa: return "serial_gsa_lsa";
    case GlsaArrangement::serial_lsa_gsa: return "serial_lsa_gsa";
  }
  throw DataError("invalid glsa arrangement value");
}

GsaUnit::GsaUnit(int channels_, Rng& rng)
    // No bias on the attention conv: a constant logit shift cancels in the
    // softmax, so it could never train.
    : att_conv(channels_, 1, 1, 1, 0, 1, false, rng), mlp(channels_, rng), channels(channels_) {
  register_module("att", &att_conv);
  register_module("mlp", &mlp);
}

Tensor GsaUnit::forward(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c != channels) {
    throw ShapeError("gsa: expected " + std::to_string(channels) + " channels, got " + s.str());
  }
  const int hw = s.h * s.w;
  // Position logits -> softmax over all hw positions, per sample.
  Tensor logits = reshape(att_conv.forward(x), Shape{s.n, 1, 1, hw});
  Tensor attention = softmax(logits, 3);
  last_attention_ = attention;
  // Context: features (c x hw) weighted by the attention column (hw x 1).
  Tensor feats = reshape(x, Shape{s.n, 1, s.c, hw});
  Tensor context = matmul(feats, transpose_hw(attention));  // (n,1,c,1)
  Tensor mixed = mlp.forward(reshape(context, Shape{s.n, s.c, 1, 1}));
  return add(x, mixed);  // per-sample broadcast over every position
}

LsaUnit::LsaUnit(int channels_, Rng& rng)
    : att_conv(channels_, channels_, 1, 1, 0, 1, true, rng), channels(channels_) {
  for (int i = 0; i < 3; ++i) {
    cascade.push_back(
        std::make_unique<nn::Conv2d>(channels, channels, 1, 1, 0, 1, true, rng));
    register_module("pw" + std::to_string(i), cascade.back().get());
    cascade.push_back(
        std::make_unique<nn::Conv2d>(channels, channels, 3, 1, 1, channels, true, rng));
    register_module("dw" + std::to_string(i), cascade.back().get());
  }
  register_module("att", &att_conv);
}

Tensor LsaUnit::forward(const Tensor& x) {
  if (x.c() != channels) {
    throw ShapeError("lsa: expected " + std::to_string(channels) + " channels, got " +
                     x.shape().str());
  }
  Tensor f = x;
  for (auto& conv : cascade) f = conv->forward(f);
  Tensor gate = sigmoid(add(att_conv.forward(f), x));
  last_attention_ = gate;
  return add(mul(gate, x), x);
}

GlsaBlock::GlsaBlock(GlsaArrangement arrangement_, Rng& rng)
    : arrangement(arrangement_),
      fuse(kInChannels, kOutChannels, 1, 1, 0, 1, true, rng) {
  const bool split_mode = arrangement == GlsaArrangement::parallel;
  const int unit_c = split_mode ? kSplit : kInChannels;
  switch (arrangement) {
    case GlsaArrangement::parallel:
    case GlsaArrangement::serial_gsa_lsa:
    case GlsaArrangement::serial_lsa_gsa:
      gsa = std::make_unique<GsaUnit>(unit_c, rng);
      lsa = std::make_unique<LsaUnit>(unit_c, rng);
      break;
    case GlsaArrangement::gsa_only:
      gsa = std::make_unique<GsaUnit>(unit_c, rng);
      break;
    case GlsaArrangement::lsa_only:
      lsa = std::make_unique<LsaUnit>(unit_c, rng);
      break;
  }
  if (gsa) register_module("gsa", gsa.get());
  if (lsa) register_module("lsa", lsa.get());
  register_module("fuse", &fuse);
}

Tensor GlsaBlock::forward(const Tensor& x) {
  if (x.c() != kInChannels) {
    throw ShapeError("glsa: expected " + std::to_string(kInChannels) + " channels, got " +
                     x.shape().str());
  }
  switch (arrangement) {
    case GlsaArrangement::parallel: {
      auto [global_half, local_half] = split_channels(x, kSplit);
      return fuse.forward(
          concat_channels({gsa->forward(global_half), lsa->forward(local_half)}));
    }
    case GlsaArrangement::gsa_only:
      return fuse.forward(gsa->forward(x));
    case GlsaArrangement::lsa_only:
      return fuse.forward(lsa->forward(x));
    case GlsaArrangement::serial_gsa_lsa:
      return fuse.forward(lsa->forward(gsa->forward(x)));
    case GlsaArrangement::serial_lsa_gsa:
      return fuse.forward(gsa->forward(lsa->forward(x)));
  }
  throw DataError("invalid glsa arrangement value");
}

}  // namespace duat
