#include "duat/nn.hpp"

#include <cmath>
#include <cstdio>

namespace duat::nn {

std::vector<Module::NamedTensor> Module::named_params() {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<Module::NamedTensor> Module::named_buffers() {
  std::vector<NamedTensor> out;
  collect("", true, out);
  return out;
}

std::int64_t Module::param_count() {
  std::int64_t total = 0;
  for (const auto& p : named_params()) total += p.tensor->numel();
  return total;
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

void Module::register_param(const std::string& name, Tensor* t) {
  params_.emplace_back(name, t);
}

void Module::register_buffer(const std::string& name, Tensor* t) {
  buffers_.emplace_back(name, t);
}

void Module::register_module(const std::string& name, Module* m) {
  children_.emplace_back(name, m);
}

void Module::collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) {
  const auto& slots = buffers ? buffers_ : params_;
  for (const auto& [name, t] : slots) {
    out.push_back(NamedTensor{prefix.empty() ? name : prefix + "." + name, t});
  }
  for (const auto& [name, child] : children_) {
    child->collect(prefix.empty() ? name : prefix + "." + name, buffers, out);
  }
}

Tensor conv_init(int out_c, int in_c_per_group, int kh, int kw, Rng& rng) {
  const double fan_in = static_cast<double>(in_c_per_group) * kh * kw;
  const double b = 1.0 / std::sqrt(fan_in);
  return Tensor::uniform(Shape{out_c, in_c_per_group, kh, kw}, -b, b, rng, true);
}

Conv2d::Conv2d(int in_c, int out_c, int k, int stride_, int pad_, int groups_, bool with_bias,
               Rng& rng)
    : in_channels(in_c),
      out_channels(out_c),
      kernel(k),
      stride(stride_),
      pad(pad_),
      groups(groups_) {
  if (groups < 1 || in_c % groups != 0 || out_c % groups != 0) {
    throw ShapeError("Conv2d: channels not divisible by groups");
  }
  weight = conv_init(out_c, in_c / groups, k, k, rng);
  register_param("weight", &weight);
  if (with_bias) {
    bias = Tensor::zeros(Shape{1, out_c, 1, 1}, true);
    register_param("bias", &bias);
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  return ops::conv2d(x, weight, bias, stride, pad, groups);
}

BatchNorm2d::BatchNorm2d(int c) : channels(c) {
  scale = Tensor::full(Shape{1, c, 1, 1}, 1.0, true);
  shift = Tensor::zeros(Shape{1, c, 1, 1}, true);
  running_mean = Tensor::zeros(Shape{1, c, 1, 1});
  running_var = Tensor::full(Shape{1, c, 1, 1}, 1.0);
  register_param("scale", &scale);
  register_param("shift", &shift);
  register_buffer("running_mean", &running_mean);
  register_buffer("running_var", &running_var);
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c != channels) {
    throw ShapeError("BatchNorm2d: expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(s.c));
  }
  const std::int64_t count = static_cast<std::int64_t>(s.n) * s.h * s.w;
  if (training() && count < 2) {
    throw ShapeError("BatchNorm2d: training mode needs n*h*w >= 2");
  }

  const double* px = x.data();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  std::vector<double> mean(channels), var(channels);
  if (training()) {
    for (int c = 0; c < channels; ++c) {
      double m = 0.0;
      for (int b = 0; b < s.n; ++b) {
        const double* p = px + (static_cast<std::int64_t>(b) * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (int b = 0; b < s.n; ++b) {
        const double* p = px + (static_cast<std::int64_t>(b) * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);  // biased, used for normalization
      mean[c] = m;
      var[c] = v;
      if (Engine::strict_finite_checks && v < 1e-12) {
        std::fprintf(stderr, "batchnorm: near-constant channel %d (var=%.3e), eps takes over\n",
                     c, v);
      }
      // Running stats track the unbiased variance.
      const double unbiased = count > 1 ? v * count / (count - 1) : v;
      running_mean.mutable_data()[c] =
          apply_precision((1.0 - momentum) * running_mean.data()[c] + momentum * m);
      running_var.mutable_data()[c] =
          apply_precision((1.0 - momentum) * running_var.data()[c] + momentum * unbiased);
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean[c] = running_mean.data()[c];
      var[c] = running_var.data()[c];
    }
  }

  Tensor out = make_tensor(s, grad_enabled({&x, &scale, &shift}));
  double* po = out.mutable_data();
  std::vector<double> inv_std(channels);
  for (int c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < channels; ++c) {
      const double g = scale.data()[c], bta = shift.data()[c];
      const double m = mean[c], is = inv_std[c];
      const double* p = px + (static_cast<std::int64_t>(b) * s.c + c) * hw;
      double* q = po + (static_cast<std::int64_t>(b) * s.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) q[i] = (p[i] - m) * is * g + bta;
    }
  }
  finalize_op(out, "batchnorm2d");

  if (out.requires_grad()) {
    const bool batch_stats = training();
    Tape::current()->record(
        out, [xi = x.impl_ptr(), si = scale.impl_ptr(), bi = shift.impl_ptr(),
              oi = out.impl_ptr(), mean, inv_std, batch_stats, s, hw, count, ch = channels] {
          const double* g = oi->grad.data();
          const double* px = xi->data.data();
          // Per-channel reductions of the incoming gradient.
          std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
          for (int b = 0; b < s.n; ++b) {
            for (int c = 0; c < ch; ++c) {
              const std::int64_t base = (static_cast<std::int64_t>(b) * s.c + c) * hw;
              double sg = 0.0, sgx = 0.0;
              for (std::int64_t i = 0; i < hw; ++i) {
                const double xh = (px[base + i] - mean[c]) * inv_std[c];
                sg += g[base + i];
                sgx += g[base + i] * xh;
              }
              sum_g[c] += sg;
              sum_gx[c] += sgx;
            }
          }
          if (si->requires_grad) {
            auto& gs = ensure_grad(*si);
            for (int c = 0; c < ch; ++c) gs[c] += sum_gx[c];
          }
          if (bi->requires_grad) {
            auto& gb = ensure_grad(*bi);
            for (int c = 0; c < ch; ++c) gb[c] += sum_g[c];
          }
          if (xi->requires_grad) {
            auto& gx = ensure_grad(*xi);
            for (int b = 0; b < s.n; ++b) {
              for (int c = 0; c < ch; ++c) {
                const double gam = si->data[c];
                const std::int64_t base = (static_cast<std::int64_t>(b) * s.c + c) * hw;
                if (batch_stats) {
                  const double mg = sum_g[c] / count;
                  const double mgx = sum_gx[c] / count;
                  for (std::int64_t i = 0; i < hw; ++i) {
                    const double xh = (px[base + i] - mean[c]) * inv_std[c];
                    gx[base + i] += gam * inv_std[c] * (g[base + i] - mg - xh * mgx);
                  }
                } else {
                  for (std::int64_t i = 0; i < hw; ++i) {
                    gx[base + i] += gam * inv_std[c] * g[base + i];
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

LayerNorm::LayerNorm(int c) : channels(c) {
  scale = Tensor::full(Shape{1, c, 1, 1}, 1.0, true);
  shift = Tensor::zeros(Shape{1, c, 1, 1}, true);
  register_param("scale", &scale);
  register_param("shift", &shift);
}

Tensor LayerNorm::forward(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c != channels) {
    throw ShapeError("LayerNorm: expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(s.c));
  }
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t positions = static_cast<std::int64_t>(s.n) * hw;
  const std::int64_t cstride = hw;

  Tensor out = make_tensor(s, grad_enabled({&x, &scale, &shift}));
  const double* px = x.data();
  double* po = out.mutable_data();
  // Statistics per (b, i, j) position over channels; stored for backward.
  auto mean = std::make_shared<std::vector<double>>(positions);
  auto inv_std = std::make_shared<std::vector<double>>(positions);
  for (int b = 0; b < s.n; ++b) {
    const double* xb = px + static_cast<std::int64_t>(b) * s.c * hw;
    double* ob = po + static_cast<std::int64_t>(b) * s.c * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      double m = 0.0;
      for (int c = 0; c < channels; ++c) m += xb[c * cstride + p];
      m /= channels;
      double v = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double d = xb[c * cstride + p] - m;
        v += d * d;
      }
      v /= channels;
      const double is = 1.0 / std::sqrt(v + eps);
      (*mean)[b * hw + p] = m;
      (*inv_std)[b * hw + p] = is;
      for (int c = 0; c < channels; ++c) {
        ob[c * cstride + p] = (xb[c * cstride + p] - m) * is * scale.data()[c] + shift.data()[c];
      }
    }
  }
  finalize_op(out, "layernorm");

  if (out.requires_grad()) {
    Tape::current()->record(
        out, [xi = x.impl_ptr(), si = scale.impl_ptr(), bi = shift.impl_ptr(),
              oi = out.impl_ptr(), mean, inv_std, s, hw, cstride, ch = channels] {
          const double* g = oi->grad.data();
          const double* px = xi->data.data();
          std::vector<double>* gx = xi->requires_grad ? &ensure_grad(*xi) : nullptr;
          std::vector<double>* gs = si->requires_grad ? &ensure_grad(*si) : nullptr;
          std::vector<double>* gb = bi->requires_grad ? &ensure_grad(*bi) : nullptr;
          for (int b = 0; b < s.n; ++b) {
            const std::int64_t bbase = static_cast<std::int64_t>(b) * s.c * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
              const double m = (*mean)[b * hw + p];
              const double is = (*inv_std)[b * hw + p];
              double mg = 0.0, mgx = 0.0;
              for (int c = 0; c < ch; ++c) {
                const std::int64_t idx = bbase + c * cstride + p;
                const double xh = (px[idx] - m) * is;
                const double gh = g[idx] * si->data[c];
                mg += gh;
                mgx += gh * xh;
                if (gs) (*gs)[c] += g[idx] * xh;
                if (gb) (*gb)[c] += g[idx];
              }
              if (gx) {
                mg /= ch;
                mgx /= ch;
                for (int c = 0; c < ch; ++c) {
                  const std::int64_t idx = bbase + c * cstride + p;
                  const double xh = (px[idx] - m) * is;
                  const double gh = g[idx] * si->data[c];
                  (*gx)[idx] += is * (gh - mg - xh * mgx);
                }
              }
            }
          }
        });
  }
  return out;
}

MlpExpand2::MlpExpand2(int c, Rng& rng)
    : fc1(c, 2 * c, 1, 1, 0, 1, true, rng),
      fc2(2 * c, c, 1, 1, 0, 1, true, rng),
      norm(2 * c),
      channels(c) {
  register_module("fc1", &fc1);
  register_module("norm", &norm);
  register_module("fc2", &fc2);
}

Tensor MlpExpand2::forward(const Tensor& x) {
  if (x.c() != channels) {
    throw ShapeError("MlpExpand2: expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(x.c()));
  }
  return fc2.forward(norm.forward(ops::relu(fc1.forward(x))));
}

ConvMlp::ConvMlp(int c, int ratio, Rng& rng)
    : fc1(c, ratio * c, 1, 1, 0, 1, true, rng),
      dw(ratio * c, ratio * c, 3, 1, 1, ratio * c, true, rng),
      fc2(ratio * c, c, 1, 1, 0, 1, true, rng) {
  register_module("fc1", &fc1);
  register_module("dw", &dw);
  register_module("fc2", &fc2);
}

Tensor ConvMlp::forward(const Tensor& x) {
  return fc2.forward(ops::relu(dw.forward(fc1.forward(x))));
}

}  // namespace duat::nn
