#pragma once

#include <memory>
#include <string>
#include <vector>

#include "duat/ops.hpp"
#include "duat/tensor.hpp"

namespace duat::nn {

// Base for parameterized blocks. Parameters and buffers are Tensor members
// of the concrete layer, registered by pointer under a local name; walking a
// module tree yields dotted paths that are unique by construction and stable
// across runs (registration order is construction order). Parameter counts
// depend only on configuration, never on the init seed.
class Module {
 public:
  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  struct NamedTensor {
    std::string name;
    Tensor* tensor;
  };

  std::vector<NamedTensor> named_params();
  std::vector<NamedTensor> named_buffers();
  std::int64_t param_count();

  // Train/eval switch (batch norm statistics); recurses into children.
  void set_training(bool training);
  bool training() const { return training_; }

 protected:
  void register_param(const std::string& name, Tensor* t);
  void register_buffer(const std::string& name, Tensor* t);
  void register_module(const std::string& name, Module* m);

 private:
  void collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out);

  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

// Fan-based uniform init: U(-b, b) with b = 1/sqrt(fan_in).
Tensor conv_init(int out_c, int in_c_per_group, int kh, int kw, Rng& rng);

// 2-D cross-correlation layer. groups == in_channels gives the depthwise case.
class Conv2d : public Module {
 public:
  Conv2d(int in_c, int out_c, int k, int stride, int pad, int groups, bool with_bias, Rng& rng);
  Tensor forward(const Tensor& x);

  Tensor weight;  // (out_c, in_c/groups, k, k)
  Tensor bias;    // (1, out_c, 1, 1); undefined when disabled
  int in_channels, out_channels, kernel, stride, pad, groups;
};

// Per-channel standardization over (n,h,w). Training mode uses batch
// statistics (biased variance) and updates running stats with momentum 0.1;
// eval mode uses the running stats. eps = 1e-5.
class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int c);
  Tensor forward(const Tensor& x);

  Tensor scale, shift;              // params (1,c,1,1)
  Tensor running_mean, running_var; // buffers (1,c,1,1)
  int channels;
  double eps = 1e-5;
  double momentum = 0.1;
};

// Standardization across channels at each (n,h,w) position, with affine
// scale/shift. Per-sample, so batch composition never leaks between samples.
class LayerNorm : public Module {
 public:
  explicit LayerNorm(int c);
  Tensor forward(const Tensor& x);

  Tensor scale, shift;  // (1,c,1,1)
  int channels;
  double eps = 1e-5;
};

// Two-layer channel MLP with expansion ratio two: c -> 2c -> c, ReLU after
// the first layer, then layer normalization before the restoring projection.
class MlpExpand2 : public Module {
 public:
  MlpExpand2(int c, Rng& rng);
  Tensor forward(const Tensor& x);

  Conv2d fc1, fc2;
  LayerNorm norm;
  int channels;
};

// 1x1 conv + 3x3 depthwise conv + ReLU + 1x1 conv; the depthwise conv
// carries positional information inside the transformer MLP.
class ConvMlp : public Module {
 public:
  ConvMlp(int c, int ratio, Rng& rng);
  Tensor forward(const Tensor& x);

  Conv2d fc1, dw, fc2;
};

}  // namespace duat::nn
