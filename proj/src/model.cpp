#include "duat/model.hpp"

#include "duat/costs.hpp"

namespace duat {

using ops::concat_channels;
using ops::resize_bilinear;
using ops::sigmoid;

void DuatConfig::validate() const {
  encoder.validate();
  if (input_h % 32 != 0 || input_w % 32 != 0 || input_h < 32 || input_w < 32) {
    throw DataError("model config: input extents must be positive multiples of 32");
  }
  if (!use_glsa && arrangement != GlsaArrangement::parallel) {
    throw DataError("model config: glsa arrangement set while glsa is disabled");
  }
}

namespace {
DuatConfig validated(DuatConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

DuatModel::DuatModel(const DuatConfig& cfg)
    : config(validated(cfg)),
      init_rng_(Rng::for_stream(cfg.seed, 0x6d6f64656cULL)),
      encoder(config.encoder, init_rng_),
      proj1(config.encoder.dims[0], 32, 1, 1, 0, 1, true, init_rng_),
      semantic_fuse(init_rng_),
      head_s1(32, 1, 1, 1, 0, 1, true, init_rng_),
      head_s2(32, 1, 1, 1, 0, 1, true, init_rng_) {
  register_module("encoder", &encoder);
  register_module("proj1", &proj1);

  const auto& dims = config.encoder.dims;
  std::unique_ptr<nn::Conv2d>* projs[3] = {&proj2, &proj3, &proj4};
  std::unique_ptr<GlsaBlock>* glsas[3] = {&glsa2, &glsa3, &glsa4};
  std::unique_ptr<nn::Conv2d>* plains[3] = {&plain2, &plain3, &plain4};
  for (int i = 0; i < 3; ++i) {
    const int level = i + 2;
    *projs[i] = std::make_unique<nn::Conv2d>(dims[level - 1], GlsaBlock::kInChannels, 1, 1, 0, 1,
                                             true, init_rng_);
    register_module("proj" + std::to_string(level), projs[i]->get());
    if (config.use_glsa) {
      *glsas[i] = std::make_unique<GlsaBlock>(config.arrangement, init_rng_);
      register_module("glsa" + std::to_string(level), glsas[i]->get());
    } else {
      // Stated replacement for the ablation: a 3x3 convolution.
      *plains[i] = std::make_unique<nn::Conv2d>(GlsaBlock::kInChannels, GlsaBlock::kOutChannels,
                                                3, 1, 1, 1, true, init_rng_);
      register_module("plain" + std::to_string(level), plains[i]->get());
    }
  }

  register_module("semantic_fuse", &semantic_fuse);
  if (config.fuse_f2) {
    f2_fuse = std::make_unique<nn::Conv2d>(64, 32, 1, 1, 0, 1, true, init_rng_);
    register_module("f2_fuse", f2_fuse.get());
  }
  if (config.use_sba) {
    sba = std::make_unique<SbaBlock>(init_rng_);
    register_module("sba", sba.get());
  } else {
    plain_sba = std::make_unique<nn::Conv2d>(64, 32, 3, 1, 1, 1, true, init_rng_);
    register_module("plain_sba", plain_sba.get());
  }
  register_module("head_s1", &head_s1);
  register_module("head_s2", &head_s2);
}

Tensor DuatModel::decode_level(int level, const Tensor& feature) {
  nn::Conv2d* proj = level == 2 ? proj2.get() : level == 3 ? proj3.get() : proj4.get();
  Tensor projected = proj->forward(feature);
  if (config.use_glsa) {
    GlsaBlock* block = level == 2 ? glsa2.get() : level == 3 ? glsa3.get() : glsa4.get();
    return block->forward(projected);
  }
  nn::Conv2d* plain = level == 2 ? plain2.get() : level == 3 ? plain3.get() : plain4.get();
  return plain->forward(projected);
}

Prediction DuatModel::forward(const Tensor& image) {
  FeaturePyramid p = encoder.forward(image);
  return forward_from_pyramid(p, image.h(), image.w());
}

Prediction DuatModel::forward_from_pyramid(const FeaturePyramid& p, int img_h, int img_w) {
  Tensor f2p, f3p, f4p;
  {
    CostMeter::Section section("decoder.glsa");
    f2p = decode_level(2, p.f2);
    f3p = decode_level(3, p.f3);
    f4p = decode_level(4, p.f4);
  }

  Tensor semantic;
  {
    CostMeter::Section section("decoder.semantic_fuse");
    semantic = semantic_fuse.forward(f3p, f4p, p.f2.h(), p.f2.w());
    if (config.fuse_f2) {
      semantic = f2_fuse->forward(concat_channels({semantic, f2p}));
    }
  }

  Tensor boundary;
  Tensor refined;
  {
    CostMeter::Section section("decoder.sba");
    boundary = proj1.forward(p.f1);
    if (config.use_sba) {
      refined = sba->forward(semantic, boundary);
    } else {
      Tensor up = resize_bilinear(semantic, boundary.h(), boundary.w());
      refined = plain_sba->forward(concat_channels({boundary, up}));
    }
  }

  Prediction out;
  {
    CostMeter::Section section("decoder.heads");
    out.s1 = resize_bilinear(head_s1.forward(refined), img_h, img_w);
    out.s2 = resize_bilinear(head_s2.forward(semantic), img_h, img_w);
  }
  return out;
}

Tensor DuatModel::predict(const Tensor& image) {
  Prediction pred = forward(image);
  Tensor prob = sigmoid(pred.s1);
  Tensor mask = make_tensor(prob.shape(), false);
  const double* p = prob.data();
  double* m = mask.mutable_data();
  for (std::int64_t i = 0; i < prob.numel(); ++i) m[i] = p[i] >= 0.5 ? 1.0 : 0.0;
  return mask;
}

}  // namespace duat
