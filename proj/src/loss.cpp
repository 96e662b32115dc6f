#include "duat/loss.hpp"

#include <cmath>

#include "duat/kernels.hpp"
#include "duat/ops.hpp"

namespace duat {

int LossConfig::radius_for(int h) const {
  const double scaled = static_cast<double>(weight_radius_base) * h / base_resolution;
  return std::max(2, static_cast<int>(std::lround(scaled)));
}

void LossConfig::validate() const {
  if (lambda_iou < 0.0 || lambda_bce < 0.0 || (lambda_iou == 0.0 && lambda_bce == 0.0)) {
    throw DataError("loss config: lambdas must be >= 0 and not both zero");
  }
  if (weight_mu < 0.0) throw DataError("loss config: weight_mu must be >= 0");
}

namespace {
void require_binary(const Tensor& mask, const char* who) {
  const double* g = mask.data();
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    if (g[i] != 0.0 && g[i] != 1.0) {
      throw DataError(std::string(who) + ": mask must be binary, found " + std::to_string(g[i]));
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(who) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}
}  // namespace

Tensor pixel_weights(const Tensor& mask, const LossConfig& cfg) {
  require_binary(mask, "pixel_weights");
  const Shape s = mask.shape();
  const int radius = cfg.radius_for(s.h);
  Tensor box = make_tensor(s, false);
  kernels::box_mean(mask.data(), box.mutable_data(), s.n * s.c, s.h, s.w, radius);
  Tensor w = make_tensor(s, false);
  const double* g = mask.data();
  const double* bm = box.data();
  double* pw = w.mutable_data();
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    pw[i] = apply_precision(1.0 + cfg.weight_mu * std::abs(bm[i] - g[i]));
  }
  return w;
}

namespace {
// Shared scaffolding: both losses are per-sample reductions of pointwise
// terms in p = sigmoid(s), with hand-derived dL/ds accumulated on backward.
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor weighted_bce_logits(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  require_same_shape(logits, mask, "weighted_bce");
  require_same_shape(logits, weights, "weighted_bce");
  const Shape sh = logits.shape();
  const std::int64_t per = static_cast<std::int64_t>(sh.c) * sh.h * sh.w;
  const double* s = logits.data();
  const double* g = mask.data();
  const double* w = weights.data();

  auto wsum = std::make_shared<std::vector<double>>(sh.n, 0.0);
  double batch_acc = 0.0;
  for (int b = 0; b < sh.n; ++b) {
    double num = 0.0, den = 0.0;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
      // bce(s,g) = max(s,0) - s*g + log(1 + exp(-|s|))
      const double bce = std::max(s[i], 0.0) - s[i] * g[i] + std::log1p(std::exp(-std::abs(s[i])));
      num += w[i] * bce;
      den += w[i];
    }
    (*wsum)[b] = den;
    batch_acc += num / den;
  }
  Tensor out = make_tensor(Shape{1, 1, 1, 1}, grad_enabled({&logits}));
  out.mutable_data()[0] = batch_acc / sh.n;
  finalize_op(out, "weighted_bce");
  if (out.requires_grad()) {
    Tape::current()->record(out, [si = logits.impl_ptr(), gi = mask.impl_ptr(),
                                  wi = weights.impl_ptr(), oi = out.impl_ptr(), wsum, per, sh] {
      if (!si->requires_grad) return;
      auto& gs = ensure_grad(*si);
      const double gout = oi->grad[0];
      const double* s = si->data.data();
      const double* g = gi->data.data();
      const double* w = wi->data.data();
      for (int b = 0; b < sh.n; ++b) {
        const double scale = gout / (sh.n * (*wsum)[b]);
        for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
          gs[i] += scale * w[i] * (stable_sigmoid(s[i]) - g[i]);
        }
      }
    });
  }
  return out;
}

Tensor weighted_iou_logits(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  require_same_shape(logits, mask, "weighted_iou");
  require_same_shape(logits, weights, "weighted_iou");
  const Shape sh = logits.shape();
  const std::int64_t per = static_cast<std::int64_t>(sh.c) * sh.h * sh.w;
  const double* s = logits.data();
  const double* g = mask.data();
  const double* w = weights.data();
  constexpr double eps = 1.0;

  auto inter = std::make_shared<std::vector<double>>(sh.n, 0.0);
  auto uni = std::make_shared<std::vector<double>>(sh.n, 0.0);
  double batch_acc = 0.0;
  for (int b = 0; b < sh.n; ++b) {
    double num = 0.0, den = 0.0;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
      const double p = stable_sigmoid(s[i]);
      num += w[i] * p * g[i];
      den += w[i] * (p + g[i] - p * g[i]);
    }
    (*inter)[b] = num;
    (*uni)[b] = den;
    batch_acc += 1.0 - (num + eps) / (den + eps);
  }
  Tensor out = make_tensor(Shape{1, 1, 1, 1}, grad_enabled({&logits}));
  out.mutable_data()[0] = batch_acc / sh.n;
  finalize_op(out, "weighted_iou");
  if (out.requires_grad()) {
    Tape::current()->record(out, [si = logits.impl_ptr(), gi = mask.impl_ptr(),
                                  wi = weights.impl_ptr(), oi = out.impl_ptr(), inter, uni, per,
                                  sh] {
      if (!si->requires_grad) return;
      auto& gs = ensure_grad(*si);
      const double gout = oi->grad[0];
      const double* s = si->data.data();
      const double* g = gi->data.data();
      const double* w = wi->data.data();
      for (int b = 0; b < sh.n; ++b) {
        const double i_b = (*inter)[b] + eps;
        const double u_b = (*uni)[b] + eps;
        for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
          const double p = stable_sigmoid(s[i]);
          // d/dp of -(I+eps)/(U+eps): quotient rule with dI/dp = w*g,
          // dU/dp = w*(1-g).
          const double dloss_dp = -(w[i] * g[i] * u_b - i_b * w[i] * (1.0 - g[i])) / (u_b * u_b);
          gs[i] += gout / sh.n * dloss_dp * p * (1.0 - p);
        }
      }
    });
  }
  return out;
}

Tensor structure_loss(const Tensor& logits, const Tensor& mask, const LossConfig& cfg) {
  cfg.validate();
  Tensor w = pixel_weights(mask, cfg);
  Tensor iou = weighted_iou_logits(logits, mask, w);
  Tensor bce = weighted_bce_logits(logits, mask, w);
  return ops::add(ops::mul_scalar(iou, cfg.lambda_iou), ops::mul_scalar(bce, cfg.lambda_bce));
}

Tensor total_loss(const Prediction& pred, const Tensor& mask, const LossConfig& cfg) {
  return ops::add(structure_loss(pred.s1, mask, cfg), structure_loss(pred.s2, mask, cfg));
}

}  // namespace duat
