#include "duat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "duat/costs.hpp"
#include "duat/kernels.hpp"

namespace duat::ops {

namespace {

constexpr std::int64_t kParallelCutoff = 1 << 12;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Broadcast classification for binary elementwise ops.
enum class Bcast { none, per_channel };

Bcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Bcast::none;
  if (b.h == 1 && b.w == 1 && b.c == a.c && (b.n == a.n || b.n == 1)) {
    return Bcast::per_channel;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " vs " + b.str());
}

// Adds g (shaped like a) into the grad of a broadcast operand b: sums over
// h,w and, when b.n == 1, over the batch too. `scale_by` optionally weights
// each contribution (used by mul).
void reduce_into_bcast(TensorImpl& b, const Shape& full, const double* g,
                       const double* scale_by) {
  auto& gb = ensure_grad(b);
  const int hw = full.h * full.w;
  for (int bn = 0; bn < full.n; ++bn) {
    const int tn = b.shape.n == 1 ? 0 : bn;
    for (int ch = 0; ch < full.c; ++ch) {
      double acc = 0.0;
      const std::int64_t base = (static_cast<std::int64_t>(bn) * full.c + ch) * hw;
      if (scale_by) {
        for (int i = 0; i < hw; ++i) acc += g[base + i] * scale_by[base + i];
      } else {
        for (int i = 0; i < hw; ++i) acc += g[base + i];
      }
      gb[static_cast<std::int64_t>(tn) * full.c + ch] += acc;
    }
  }
}

void add_into(std::vector<double>& dst, const double* src, std::int64_t n, double scale = 1.0) {
  if (scale == 1.0) {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += scale * src[i];
  }
}

double bcast_value(const TensorImpl& b, int bn, int ch) {
  const int tn = b.shape.n == 1 ? 0 : bn;
  return b.data[static_cast<std::int64_t>(tn) * b.shape.c + ch];
}

template <typename Fwd>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd) {
  const Bcast bc = classify(a.shape(), b.shape(), name);
  Tensor out = make_tensor(a.shape(), grad_enabled({&a, &b}));
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mutable_data();
  const std::int64_t total = a.numel();
  if (bc == Bcast::none) {
#pragma omp parallel for schedule(static) if (total > kParallelCutoff)
    for (std::int64_t i = 0; i < total; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    const Shape s = a.shape();
    const int hw = s.h * s.w;
    for (int bn = 0; bn < s.n; ++bn) {
      for (int ch = 0; ch < s.c; ++ch) {
        const double bv = bcast_value(*b.impl(), bn, ch);
        const std::int64_t base = (static_cast<std::int64_t>(bn) * s.c + ch) * hw;
        for (int i = 0; i < hw; ++i) po[base + i] = fwd(pa[base + i], bv);
      }
    }
  }
  finalize_op(out, name);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a.shape(), b.shape(), "add");
  Tensor out = binary_ew(a, b, "add", [](double x, double y) { return x + y; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), bc] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) add_into(ensure_grad(*ai), g, ai->shape.numel());
      if (bi->requires_grad) {
        if (bc == Bcast::none) {
          add_into(ensure_grad(*bi), g, bi->shape.numel());
        } else {
          reduce_into_bcast(*bi, ai->shape, g, nullptr);
        }
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a.shape(), b.shape(), "sub");
  Tensor out = binary_ew(a, b, "sub", [](double x, double y) { return x - y; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), bc] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) add_into(ensure_grad(*ai), g, ai->shape.numel());
      if (bi->requires_grad) {
        if (bc == Bcast::none) {
          add_into(ensure_grad(*bi), g, bi->shape.numel(), -1.0);
        } else {
          std::vector<double> neg(oi->grad.size());
          for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -g[i];
          reduce_into_bcast(*bi, ai->shape, neg.data(), nullptr);
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a.shape(), b.shape(), "mul");
  Tensor out = binary_ew(a, b, "mul", [](double x, double y) { return x * y; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), bc] {
      const double* g = oi->grad.data();
      const Shape s = ai->shape;
      if (ai->requires_grad) {
        auto& ga = ensure_grad(*ai);
        if (bc == Bcast::none) {
          const double* pb = bi->data.data();
          for (std::int64_t i = 0; i < s.numel(); ++i) ga[i] += g[i] * pb[i];
        } else {
          const int hw = s.h * s.w;
          for (int bn = 0; bn < s.n; ++bn) {
            for (int ch = 0; ch < s.c; ++ch) {
              const double bv = bcast_value(*bi, bn, ch);
              const std::int64_t base = (static_cast<std::int64_t>(bn) * s.c + ch) * hw;
              for (int i = 0; i < hw; ++i) ga[base + i] += g[base + i] * bv;
            }
          }
        }
      }
      if (bi->requires_grad) {
        if (bc == Bcast::none) {
          auto& gb = ensure_grad(*bi);
          const double* pa = ai->data.data();
          for (std::int64_t i = 0; i < s.numel(); ++i) gb[i] += g[i] * pa[i];
        } else {
          reduce_into_bcast(*bi, s, g, ai->data.data());
        }
      }
    });
  }
  return out;
}

namespace {
template <typename Fwd>
Tensor unary_ew(const Tensor& a, const char* name, Fwd fwd) {
  Tensor out = make_tensor(a.shape(), grad_enabled({&a}));
  const double* pa = a.data();
  double* po = out.mutable_data();
  const std::int64_t total = a.numel();
#pragma omp parallel for schedule(static) if (total > kParallelCutoff)
  for (std::int64_t i = 0; i < total; ++i) po[i] = fwd(pa[i]);
  finalize_op(out, name);
  return out;
}
}  // namespace

Tensor neg(const Tensor& a) {
  Tensor out = unary_ew(a, "neg", [](double x) { return -x; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (ai->requires_grad) add_into(ensure_grad(*ai), oi->grad.data(), ai->shape.numel(), -1.0);
    });
  }
  return out;
}

Tensor one_minus(const Tensor& a) {
  Tensor out = unary_ew(a, "one_minus", [](double x) { return 1.0 - x; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (ai->requires_grad) add_into(ensure_grad(*ai), oi->grad.data(), ai->shape.numel(), -1.0);
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = unary_ew(a, "add_scalar", [s](double x) { return x + s; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (ai->requires_grad) add_into(ensure_grad(*ai), oi->grad.data(), ai->shape.numel());
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  Tensor out = unary_ew(a, "mul_scalar", [s](double x) { return x * s; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr(), s] {
      if (ai->requires_grad) add_into(ensure_grad(*ai), oi->grad.data(), ai->shape.numel(), s);
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = unary_ew(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (!ai->requires_grad) return;
      auto& ga = ensure_grad(*ai);
      const double* g = oi->grad.data();
      const double* x = ai->data.data();
      for (std::int64_t i = 0; i < ai->shape.numel(); ++i) {
        if (x[i] > 0.0) ga[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = unary_ew(a, "sigmoid", [](double x) {
    // Clamp keeps the output strictly inside (0,1) even at saturation.
    constexpr double lo = 1e-300;
    constexpr double hi = 1.0 - 1e-16;
    double v;
    if (x >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      v = e / (1.0 + e);
    }
    return std::min(std::max(v, lo), hi);
  });
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (!ai->requires_grad) return;
      auto& ga = ensure_grad(*ai);
      const double* g = oi->grad.data();
      const double* y = oi->data.data();
      for (std::int64_t i = 0; i < ai->shape.numel(); ++i) {
        ga[i] += g[i] * y[i] * (1.0 - y[i]);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = make_tensor(Shape{1, 1, 1, 1}, grad_enabled({&a}));
  const double* pa = a.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
  out.mutable_data()[0] = acc;
  finalize_op(out, "sum_all");
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (!ai->requires_grad) return;
      auto& ga = ensure_grad(*ai);
      const double g = oi->grad[0];
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape s) {
  require(s.numel() == a.numel(),
          "reshape: numel mismatch " + a.shape().str() + " -> " + s.str());
  Tensor out = make_tensor(s, grad_enabled({&a}));
  std::memcpy(out.mutable_data(), a.data(), sizeof(double) * a.numel());
  finalize_op(out, "reshape");
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (ai->requires_grad) add_into(ensure_grad(*ai), oi->grad.data(), ai->shape.numel());
    });
  }
  return out;
}

namespace {
void transpose_hw_raw(const double* x, double* y, int planes, int h, int w) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(planes) * h * w > kParallelCutoff)
  for (int p = 0; p < planes; ++p) {
    const double* xp = x + static_cast<std::int64_t>(p) * h * w;
    double* yp = y + static_cast<std::int64_t>(p) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) yp[j * h + i] = xp[i * w + j];
    }
  }
}
}  // namespace

Tensor transpose_hw(const Tensor& a) {
  const Shape s = a.shape();
  Tensor out = make_tensor(Shape{s.n, s.c, s.w, s.h}, grad_enabled({&a}));
  transpose_hw_raw(a.data(), out.mutable_data(), s.n * s.c, s.h, s.w);
  finalize_op(out, "transpose_hw");
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr()] {
      if (!ai->requires_grad) return;
      const Shape& os = oi->shape;
      std::vector<double> tmp(oi->grad.size());
      transpose_hw_raw(oi->grad.data(), tmp.data(), os.n * os.c, os.h, os.w);
      add_into(ensure_grad(*ai), tmp.data(), ai->shape.numel());
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require(sa.n == sb.n && sa.c == sb.c,
          "matmul: batch extents differ " + sa.str() + " vs " + sb.str());
  require(sa.w == sb.h, "matmul: inner extents differ " + sa.str() + " vs " + sb.str());
  const int batch = sa.n * sa.c;
  const int p = sa.h, k = sa.w, q = sb.w;
  Tensor out = make_tensor(Shape{sa.n, sa.c, p, q}, grad_enabled({&a, &b}));
  kernels::matmul(a.data(), b.data(), out.mutable_data(), batch, p, k, q, false, false);
  if (CostMeter* m = CostMeter::active()) {
    m->add_macs(static_cast<std::int64_t>(batch) * p * k * q);
  }
  finalize_op(out, "matmul");
  if (out.requires_grad()) {
    Tape::current()->record(
        out, [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), batch, p, k, q] {
          const double* g = oi->grad.data();
          if (ai->requires_grad) {
            std::vector<double> tmp(ai->data.size());
            kernels::matmul(g, bi->data.data(), tmp.data(), batch, p, q, k, false, true);
            add_into(ensure_grad(*ai), tmp.data(), ai->shape.numel());
          }
          if (bi->requires_grad) {
            std::vector<double> tmp(bi->data.size());
            kernels::matmul(ai->data.data(), g, tmp.data(), batch, k, p, q, true, false);
            add_into(ensure_grad(*bi), tmp.data(), bi->shape.numel());
          }
        });
  }
  return out;
}

namespace {
void softmax_extents(const Shape& s, int axis, std::int64_t& outer, std::int64_t& len,
                     std::int64_t& inner) {
  const int dims[4] = {s.n, s.c, s.h, s.w};
  if (axis < 0 || axis > 3) throw ShapeError("softmax: axis out of range");
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= dims[i];
  len = dims[axis];
  for (int i = axis + 1; i < 4; ++i) inner *= dims[i];
  if (len < 1) throw ShapeError("softmax: axis extent must be >= 1");
}
}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  check_all_finite(a, "softmax input");
  std::int64_t outer, len, inner;
  softmax_extents(a.shape(), axis, outer, len, inner);
  Tensor out = make_tensor(a.shape(), grad_enabled({&a}));
  kernels::softmax(a.data(), out.mutable_data(), outer, len, inner);
  finalize_op(out, "softmax");
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr(), outer, len, inner] {
      if (!ai->requires_grad) return;
      std::vector<double> tmp(ai->data.size());
      kernels::softmax_backward(oi->data.data(), oi->grad.data(), tmp.data(), outer, len, inner);
      add_into(ensure_grad(*ai), tmp.data(), ai->shape.numel());
    });
  }
  return out;
}

Tensor resize_bilinear(const Tensor& a, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: output extents must be >= 1");
  const Shape s = a.shape();
  Tensor out = make_tensor(Shape{s.n, s.c, out_h, out_w}, grad_enabled({&a}));
  kernels::resize_bilinear_forward(a.data(), out.mutable_data(), s.n * s.c, s.h, s.w, out_h,
                                   out_w);
  finalize_op(out, "resize_bilinear");
  if (out.requires_grad()) {
    Tape::current()->record(out, [ai = a.impl_ptr(), oi = out.impl_ptr(), out_h, out_w] {
      if (!ai->requires_grad) return;
      const Shape& is = ai->shape;
      std::vector<double> tmp(ai->data.size());
      kernels::resize_bilinear_backward(oi->grad.data(), tmp.data(), is.n * is.c, is.h, is.w,
                                        out_h, out_w);
      add_into(ensure_grad(*ai), tmp.data(), ai->shape.numel());
    });
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& a, int k) {
  const Shape s = a.shape();
  require(k > 0 && k < s.c, "split_channels: k=" + std::to_string(k) + " outside (0," +
                                std::to_string(s.c) + ")");
  const bool rg = grad_enabled({&a});
  Tensor first = make_tensor(Shape{s.n, k, s.h, s.w}, rg);
  Tensor second = make_tensor(Shape{s.n, s.c - k, s.h, s.w}, rg);
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  for (int b = 0; b < s.n; ++b) {
    const double* src = a.data() + static_cast<std::int64_t>(b) * s.c * hw;
    std::memcpy(first.mutable_data() + static_cast<std::int64_t>(b) * k * hw, src,
                sizeof(double) * k * hw);
    std::memcpy(second.mutable_data() + static_cast<std::int64_t>(b) * (s.c - k) * hw,
                src + k * hw, sizeof(double) * (s.c - k) * hw);
  }
  finalize_op(first, "split_channels");
  finalize_op(second, "split_channels");
  if (rg) {
    auto route = [s, hw](TensorImpl& in, const TensorImpl& out, int ch_offset) {
      if (!in.requires_grad) return;
      auto& g = ensure_grad(in);
      const int oc = out.shape.c;
      for (int b = 0; b < s.n; ++b) {
        const double* src = out.grad.data() + static_cast<std::int64_t>(b) * oc * hw;
        double* dst = g.data() + (static_cast<std::int64_t>(b) * s.c + ch_offset) * hw;
        for (std::int64_t i = 0; i < oc * hw; ++i) dst[i] += src[i];
      }
    };
    Tape::current()->record(first, [ai = a.impl_ptr(), oi = first.impl_ptr(), route] {
      route(*ai, *oi, 0);
    });
    Tape::current()->record(second, [ai = a.impl_ptr(), oi = second.impl_ptr(), route, k] {
      route(*ai, *oi, k);
    });
  }
  return {first, second};
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape s0 = parts[0].shape();
  int total_c = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == s0.n && s.h == s0.h && s.w == s0.w,
            "concat_channels: mismatched extents " + s.str() + " vs " + s0.str());
    total_c += s.c;
    rg = rg || grad_enabled({&p});
  }
  Tensor out = make_tensor(Shape{s0.n, total_c, s0.h, s0.w}, rg);
  const std::int64_t hw = static_cast<std::int64_t>(s0.h) * s0.w;
  for (int b = 0; b < s0.n; ++b) {
    int ch = 0;
    for (const auto& p : parts) {
      const int c = p.shape().c;
      std::memcpy(out.mutable_data() + (static_cast<std::int64_t>(b) * total_c + ch) * hw,
                  p.data() + static_cast<std::int64_t>(b) * c * hw, sizeof(double) * c * hw);
      ch += c;
    }
  }
  finalize_op(out, "concat_channels");
  if (rg) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl_ptr());
    Tape::current()->record(out, [impls, oi = out.impl_ptr(), total_c, hw] {
      const Shape& os = oi->shape;
      int ch = 0;
      for (const auto& in : impls) {
        const int c = in->shape.c;
        if (in->requires_grad) {
          auto& g = ensure_grad(*in);
          for (int b = 0; b < os.n; ++b) {
            const double* src =
                oi->grad.data() + (static_cast<std::int64_t>(b) * total_c + ch) * hw;
            double* dst = g.data() + static_cast<std::int64_t>(b) * c * hw;
            for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
          }
        }
        ch += c;
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad,
              int groups) {
  const Shape xs = x.shape(), ws = weight.shape();
  require(groups >= 1 && xs.c % groups == 0,
          "conv2d: input channels " + std::to_string(xs.c) + " not divisible by groups " +
              std::to_string(groups));
  require(ws.c == xs.c / groups, "conv2d: weight expects " + std::to_string(ws.c * groups) +
                                     " input channels, got " + std::to_string(xs.c));
  require(ws.n % groups == 0, "conv2d: output channels not divisible by groups");
  if (bias.defined()) {
    require(bias.shape() == Shape{1, ws.n, 1, 1},
            "conv2d: bias shape must be (1,out,1,1), got " + bias.shape().str());
  }
  kernels::Conv2dDims d{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, stride, pad, groups};
  require(d.ho() >= 1 && d.wo() >= 1, "conv2d: empty output for input " + xs.str());

  Tensor out = make_tensor(Shape{xs.n, ws.n, d.ho(), d.wo()},
                           grad_enabled({&x, &weight, &bias}));
  kernels::conv2d_forward(x.data(), weight.data(), bias.defined() ? bias.data() : nullptr,
                          out.mutable_data(), d);
  if (CostMeter* m = CostMeter::active()) {
    m->add_macs(static_cast<std::int64_t>(d.n) * d.co * d.ho() * d.wo() * (d.ci / d.groups) *
                d.kh * d.kw);
  }
  finalize_op(out, "conv2d");
  if (out.requires_grad()) {
    auto bimpl = bias.defined() ? bias.impl_ptr() : nullptr;
    Tape::current()->record(
        out, [xi = x.impl_ptr(), wi = weight.impl_ptr(), bimpl, oi = out.impl_ptr(), d] {
          const double* g = oi->grad.data();
          if (xi->requires_grad) {
            std::vector<double> tmp(xi->data.size());
            kernels::conv2d_backward_input(g, wi->data.data(), tmp.data(), d);
            add_into(ensure_grad(*xi), tmp.data(), xi->shape.numel());
          }
          if (wi->requires_grad) {
            std::vector<double> tmp(wi->data.size());
            kernels::conv2d_backward_weight(g, xi->data.data(), tmp.data(), d);
            add_into(ensure_grad(*wi), tmp.data(), wi->shape.numel());
          }
          if (bimpl && bimpl->requires_grad) {
            std::vector<double> tmp(bimpl->data.size());
            kernels::conv2d_backward_bias(g, tmp.data(), d.n, d.co, d.ho(), d.wo());
            add_into(ensure_grad(*bimpl), tmp.data(), bimpl->shape.numel());
          }
        });
  }
  return out;
}

}  // namespace duat::ops
