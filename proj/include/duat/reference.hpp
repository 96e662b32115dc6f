#pragma once

#include <cstdint>

#include "duat/kernels.hpp"

// Serial reference implementations of the compute kernels. Deliberately
// naive (direct loop transcriptions of the definitions), kept independent of
// duat::kernels so tests can compare the two and the benchmark can time them.
// Nothing in the library's forward/backward paths calls into this namespace.

namespace duat::ref {

using kernels::Conv2dDims;

// Direct six-loop sliding-window cross-correlation.
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);

// Triple-loop matrix product per batch element.
void matmul(const double* a, const double* b, double* c, int batch, int p, int k, int q,
            bool trans_a, bool trans_b);

void softmax(const double* x, double* y, std::int64_t outer, std::int64_t len,
             std::int64_t inner);

void resize_bilinear_forward(const double* x, double* y, int planes, int hi, int wi, int ho,
                             int wo);

void box_mean(const double* m, double* out, int planes, int h, int w, int radius);

// Dense multi-head self-attention over t tokens: out = softmax(q k^T / sqrt(dh)) v,
// computed per head with explicit loops. q, k, v are (heads, t, dh) row-major;
// out has the same layout.
void dense_attention(const double* q, const double* k, const double* v, double* out, int heads,
                     int t, int dh);

}  // namespace duat::ref
