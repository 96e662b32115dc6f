#pragma once

#include <cstdint>

// OpenMP-parallel compute kernels over raw row-major buffers. Each output
// element is written by exactly one thread and accumulated in a fixed serial
// order, so results are bit-identical run to run regardless of thread count.
//
// duat::ref (reference.hpp) provides serial naive implementations with the
// same signatures; tests compare the two and the benchmark tool times them.

namespace duat::kernels {

struct Conv2dDims {
  int n;       // batch
  int ci;      // input channels
  int hi, wi;  // input spatial extents
  int co;      // output channels
  int kh, kw;  // kernel extents
  int stride;
  int pad;
  int groups;

  int ho() const { return (hi + 2 * pad - kh) / stride + 1; }
  int wo() const { return (wi + 2 * pad - kw) / stride + 1; }
};

// y[n,co,ho,wo] = bias[co] + sum over the co's group slice of x cross-correlated
// with w[co, ci/groups, kh, kw]. bias may be null.
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d);
void conv2d_backward_bias(const double* gy, double* gb, int n, int co, int ho, int wo);

// Batched c[b] = op_a(a[b]) * op_b(b[b]) where op is optional transposition.
// a is (p x k) per batch (k x p when trans_a), b is (k x q) (q x k when trans_b).
void matmul(const double* a, const double* b, double* c, int batch, int p, int k, int q,
            bool trans_a, bool trans_b);

// Softmax over the middle extent of a (outer, len, inner) view; max-subtracted.
void softmax(const double* x, double* y, std::int64_t outer, std::int64_t len,
             std::int64_t inner);
// gx = (gy - sum(gy * y)) * y per slice.
void softmax_backward(const double* y, const double* gy, double* gx, std::int64_t outer,
                      std::int64_t len, std::int64_t inner);

// Align-corners-false bilinear interpolation over (n*c) independent planes.
void resize_bilinear_forward(const double* x, double* y, int planes, int hi, int wi, int ho,
                             int wo);
void resize_bilinear_backward(const double* gy, double* gx, int planes, int hi, int wi, int ho,
                              int wo);

// out[p] = mean of m over the (2r+1)^2 window centered at p, clipped to the
// plane bounds and normalized by the clipped window area.
void box_mean(const double* m, double* out, int planes, int h, int w, int radius);

}  // namespace duat::kernels
