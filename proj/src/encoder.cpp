#include "duat/encoder.hpp"

#include <cmath>

#include "duat/costs.hpp"

namespace duat {

using ops::add;
using ops::conv2d;
using ops::matmul;
using ops::mul_scalar;
using ops::relu;
using ops::reshape;
using ops::softmax;
using ops::transpose_hw;

void EncoderConfig::validate() const {
  if (depths.size() != 4 || dims.size() != 4 || heads.size() != 4 || sr_ratios.size() != 4) {
    throw DataError("encoder config: depths/dims/heads/sr must list 4 stages");
  }
  for (int i = 0; i < 4; ++i) {
    if (depths[i] < 1) throw DataError("encoder config: stage depth must be >= 1");
    if (dims[i] % heads[i] != 0) {
      throw DataError("encoder config: dim " + std::to_string(dims[i]) +
                      " not divisible by heads " + std::to_string(heads[i]));
    }
    const int r = sr_ratios[i];
    if (r < 1 || (r & (r - 1)) != 0) {
      throw DataError("encoder config: sr ratio must be a power of two");
    }
  }
}

EncoderConfig EncoderConfig::tiny() {
  EncoderConfig cfg;
  cfg.depths = {1, 1, 1, 1};
  cfg.dims = {8, 16, 24, 32};
  cfg.heads = {1, 2, 4, 8};
  cfg.sr_ratios = {8, 4, 2, 1};
  return cfg;
}

PatchEmbed::PatchEmbed(int in_c, int embed_dim, int kernel, int stride_, Rng& rng)
    : proj(in_c, embed_dim, kernel, stride_, (kernel - 1) / 2, 1, true, rng),
      norm(embed_dim),
      stride(stride_) {
  register_module("proj", &proj);
  register_module("norm", &norm);
}

Tensor PatchEmbed::forward(const Tensor& x) {
  if (x.h() % stride != 0 || x.w() % stride != 0) {
    throw ShapeError("patch_embed: input " + x.shape().str() + " not divisible by stride " +
                     std::to_string(stride));
  }
  return norm.forward(proj.forward(x));
}

SrAttention::SrAttention(int dim_, int heads_, int reduction_, Rng& rng)
    : norm(dim_),
      q_proj(dim_, dim_, 1, 1, 0, 1, true, rng),
      k_proj(dim_, dim_, 1, 1, 0, 1, true, rng),
      v_proj(dim_, dim_, 1, 1, 0, 1, true, rng),
      out_proj(dim_, dim_, 1, 1, 0, 1, true, rng),
      dim(dim_),
      heads(heads_),
      reduction(reduction_) {
  if (dim % heads != 0) throw ShapeError("sr_attention: dim not divisible by heads");
  register_module("norm", &norm);
  register_module("q", &q_proj);
  register_module("k", &k_proj);
  register_module("v", &v_proj);
  register_module("out", &out_proj);
  if (reduction > 1) {
    sr = std::make_unique<nn::Conv2d>(dim, dim, reduction, reduction, 0, 1, true, rng);
    sr_norm = std::make_unique<nn::LayerNorm>(dim);
    register_module("sr", sr.get());
    register_module("sr_norm", sr_norm.get());
  }
}

Tensor SrAttention::forward(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c != dim) throw ShapeError("sr_attention: channel mismatch");
  if (s.h % reduction != 0 || s.w % reduction != 0) {
    throw ShapeError("sr_attention: grid " + s.str() + " not divisible by reduction " +
                     std::to_string(reduction));
  }
  const int dh = dim / heads;
  const int tokens = s.h * s.w;

  Tensor z = norm.forward(x);
  Tensor q = q_proj.forward(z);
  Tensor kv_src = z;
  if (reduction > 1) kv_src = sr_norm->forward(sr->forward(kv_src));
  Tensor k = k_proj.forward(kv_src);
  Tensor v = v_proj.forward(kv_src);
  const int kv_tokens = kv_src.h() * kv_src.w();

  // (n, heads*dh, h, w) reinterpreted as (n*heads, 1, dh, tokens), then
  // transposed into row-per-token matrices.
  auto to_rows = [&](const Tensor& t, int tok) {
    return transpose_hw(reshape(t, Shape{s.n * heads, 1, dh, tok}));
  };
  Tensor qm = to_rows(q, tokens);            // (n*heads, 1, tokens, dh)
  Tensor km = to_rows(k, kv_tokens);         // (n*heads, 1, kv_tokens, dh)
  Tensor vm = to_rows(v, kv_tokens);

  Tensor scores = mul_scalar(matmul(qm, transpose_hw(km)), 1.0 / std::sqrt(double(dh)));
  Tensor attn = softmax(scores, 3);          // rows over kv tokens
  Tensor ctx = matmul(attn, vm);             // (n*heads, 1, tokens, dh)
  Tensor merged = reshape(transpose_hw(ctx), Shape{s.n, dim, s.h, s.w});
  return add(x, out_proj.forward(merged));
}

EncoderBlock::EncoderBlock(int dim, int heads, int reduction, int mlp_ratio, Rng& rng)
    : attn(dim, heads, reduction, rng), mlp_norm(dim), mlp(dim, mlp_ratio, rng) {
  register_module("attn", &attn);
  register_module("mlp_norm", &mlp_norm);
  register_module("mlp", &mlp);
}

Tensor EncoderBlock::forward(const Tensor& x) {
  Tensor y = attn.forward(x);
  return add(y, mlp.forward(mlp_norm.forward(y)));
}

EncoderStage::EncoderStage(int in_c, int dim, int depth, int heads, int reduction, int mlp_ratio,
                           bool first_stage, Rng& rng)
    : embed(in_c, dim, first_stage ? 7 : 3, first_stage ? 4 : 2, rng), out_norm(dim) {
  register_module("embed", &embed);
  for (int i = 0; i < depth; ++i) {
    blocks.push_back(std::make_unique<EncoderBlock>(dim, heads, reduction, mlp_ratio, rng));
    register_module("block" + std::to_string(i), blocks.back().get());
  }
  register_module("out_norm", &out_norm);
}

Tensor EncoderStage::forward(const Tensor& x) {
  Tensor y = embed.forward(x);
  for (auto& b : blocks) y = b->forward(y);
  return out_norm.forward(y);
}

PvtEncoder::PvtEncoder(const EncoderConfig& cfg, Rng& rng) : config(cfg) {
  cfg.validate();
  int in_c = 3;
  for (int i = 0; i < 4; ++i) {
    stages.push_back(std::make_unique<EncoderStage>(in_c, cfg.dims[i], cfg.depths[i],
                                                    cfg.heads[i], cfg.sr_ratios[i],
                                                    cfg.mlp_ratio, i == 0, rng));
    register_module("stage" + std::to_string(i + 1), stages.back().get());
    in_c = cfg.dims[i];
  }
}

FeaturePyramid PvtEncoder::forward(const Tensor& image) {
  const Shape s = image.shape();
  if (s.c != 3) throw ShapeError("encoder: expected 3 input channels, got " + s.str());
  if (s.h % 32 != 0 || s.w % 32 != 0) {
    throw ShapeError("encoder: input extents must be divisible by 32, got " + s.str());
  }
  FeaturePyramid p;
  Tensor x = image;
  Tensor* outs[4] = {&p.f1, &p.f2, &p.f3, &p.f4};
  for (int i = 0; i < 4; ++i) {
    CostMeter::Section section("encoder.stage" + std::to_string(i + 1));
    x = stages[static_cast<std::size_t>(i)]->forward(x);
    *outs[i] = x;
  }
  return p;
}

}  // namespace duat
