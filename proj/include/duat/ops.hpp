#pragma once

#include <utility>
#include <vector>

#include "duat/tensor.hpp"

// Differentiable tensor operations. Every function computes its result
// eagerly and, when a tape is active and an input wants gradients, records a
// backward step on the current tape. Binary elementwise ops accept equal
// shapes, or a bias/context-style right operand with h == w == 1, matching
// channel count, and batch extent 1 or n.

namespace duat::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
// The reverse operation 1 - x.
Tensor one_minus(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
// Numerically stable logistic; output clamped into the open interval (0,1).
Tensor sigmoid(const Tensor& a);

// Reduction to a (1,1,1,1) scalar.
Tensor sum_all(const Tensor& a);

// Same data, new extents; numel must match.
Tensor reshape(const Tensor& a, Shape s);
// (n,c,h,w) -> (n,c,w,h).
Tensor transpose_hw(const Tensor& a);

// Batched matrix product over the leading n*c matrices: a(p,k) x b(k,q).
// Requires a.n==b.n, a.c==b.c, and inner extents to agree.
Tensor matmul(const Tensor& a, const Tensor& b);

// Softmax along one axis (0=n, 1=c, 2=h, 3=w); max-subtracted per slice.
Tensor softmax(const Tensor& a, int axis);

// Align-corners-false bilinear resample to (out_h, out_w).
Tensor resize_bilinear(const Tensor& a, int out_h, int out_w);

// First k channels / remaining c-k channels. Requires 0 < k < c.
std::pair<Tensor, Tensor> split_channels(const Tensor& a, int k);
Tensor concat_channels(const std::vector<Tensor>& parts);

// Cross-correlation with stride/padding/groups; bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad,
              int groups);

}  // namespace duat::ops
