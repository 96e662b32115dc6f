#pragma once

#include "duat/model.hpp"
#include "duat/tensor.hpp"

namespace duat {

struct LossConfig {
  double lambda_iou = 1.0;
  double lambda_bce = 1.0;
  // Boundary emphasis: w = 1 + mu * |boxmean_r(g) - g|. The radius follows
  // the 15-pixel convention at 352-pixel inputs and scales with resolution,
  // never dropping below 2.
  double weight_mu = 5.0;
  int weight_radius_base = 15;
  int base_resolution = 352;

  int radius_for(int h) const;
  void validate() const;
};

// Per-pixel boundary weights from a binary ground-truth mask (no gradient).
// Weights are >= 1 everywhere and exactly 1 on constant masks.
Tensor pixel_weights(const Tensor& mask, const LossConfig& cfg);

// Weighted binary cross entropy on logits: per sample sum(w * bce) / sum(w),
// averaged over the batch. Differentiable in the logits only.
Tensor weighted_bce_logits(const Tensor& logits, const Tensor& mask, const Tensor& weights);

// Weighted IoU on probabilities p = sigmoid(logits):
//   1 - (sum(w*p*g) + 1) / (sum(w*(p + g - p*g)) + 1)
// per sample, averaged over the batch. Differentiable in the logits only.
Tensor weighted_iou_logits(const Tensor& logits, const Tensor& mask, const Tensor& weights);

// lambda_iou * wIoU + lambda_bce * wBCE for one side output.
Tensor structure_loss(const Tensor& logits, const Tensor& mask, const LossConfig& cfg);

// Deep supervision: sum of the structure loss over both side outputs.
Tensor total_loss(const Prediction& pred, const Tensor& mask, const LossConfig& cfg);

}  // namespace duat
