#include "duat/sba.hpp"

namespace duat {

using ops::add;
using ops::concat_channels;
using ops::mul;
using ops::one_minus;
using ops::relu;
using ops::resize_bilinear;
using ops::sigmoid;

RauUnit::RauUnit(int channels_, Rng& rng)
    : gate1(channels_, channels_, 1, 1, 0, 1, true, rng),
      gate2(channels_, channels_, 1, 1, 0, 1, true, rng),
      channels(channels_) {
  register_module("gate1", &gate1);
  register_module("gate2", &gate2);
}

Tensor RauUnit::forward(const Tensor& t1, const Tensor& t2) {
  if (!(t1.shape() == t2.shape())) {
    throw ShapeError("rau: inputs must match, got " + t1.shape().str() + " vs " +
                     t2.shape().str());
  }
  if (t1.c() != channels) {
    throw ShapeError("rau: expected " + std::to_string(channels) + " channels");
  }
  Tensor g1 = sigmoid(gate1.forward(t1));
  Tensor g2 = sigmoid(gate2.forward(t2));
  Tensor mixed = add(mul(g1, t1), mul(mul(g2, t2), one_minus(g1)));
  return add(mixed, t1);
}

SemanticFuse::SemanticFuse(Rng& rng) : fuse(64, 32, 1, 1, 0, 1, true, rng) {
  register_module("fuse", &fuse);
}

Tensor SemanticFuse::forward(const Tensor& f3p, const Tensor& f4p, int target_h, int target_w) {
  if (f3p.c() != 32 || f4p.c() != 32) {
    throw ShapeError("semantic fuse: expected 32-channel inputs");
  }
  Tensor f4_up = resize_bilinear(f4p, f3p.h(), f3p.w());
  Tensor fused = fuse.forward(concat_channels({f3p, f4_up}));
  return resize_bilinear(fused, target_h, target_w);
}

SbaBlock::SbaBlock(Rng& rng)
    : rau_sb(kChannels, rng),
      rau_bs(kChannels, rng),
      fuse_conv(2 * kChannels, kChannels, 3, 1, 1, 1, true, rng),
      fuse_norm(kChannels) {
  register_module("rau_sb", &rau_sb);
  register_module("rau_bs", &rau_bs);
  register_module("fuse_conv", &fuse_conv);
  register_module("fuse_norm", &fuse_norm);
}

Tensor SbaBlock::forward(const Tensor& f_semantic, const Tensor& f_boundary) {
  if (f_semantic.c() != kChannels || f_boundary.c() != kChannels) {
    throw ShapeError("sba: both streams must have 32 channels");
  }
  Tensor sem = f_semantic;
  if (sem.h() != f_boundary.h() || sem.w() != f_boundary.w()) {
    sem = resize_bilinear(sem, f_boundary.h(), f_boundary.w());
  }
  Tensor mixed = concat_channels({rau_sb.forward(sem, f_boundary),
                                  rau_bs.forward(f_boundary, sem)});
  return relu(fuse_norm.forward(fuse_conv.forward(mixed)));
}

}  // namespace duat
