#include "duat/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace duat::kernels {

namespace {
// Small tensors are cheaper single-threaded than with fork/join overhead.
constexpr std::int64_t kParallelCutoff = 1 << 12;
}  // namespace

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int ho = d.ho(), wo = d.wo();
  const int cig = d.ci / d.groups;  // input channels per group
  const int cog = d.co / d.groups;
  const std::int64_t x_n = static_cast<std::int64_t>(d.ci) * d.hi * d.wi;
  const std::int64_t y_n = static_cast<std::int64_t>(d.co) * ho * wo;
  const std::int64_t work = static_cast<std::int64_t>(d.n) * y_n * cig * d.kh * d.kw;

  if (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0 && d.groups == 1) {
    // 1x1 projection: per (b, co) accumulate channel-scaled rows.
    const int hw = d.hi * d.wi;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelCutoff)
    for (int b = 0; b < d.n; ++b) {
      for (int co = 0; co < d.co; ++co) {
        double* yr = y + b * y_n + static_cast<std::int64_t>(co) * hw;
        const double b0 = bias ? bias[co] : 0.0;
        for (int i = 0; i < hw; ++i) yr[i] = b0;
        const double* wr = w + static_cast<std::int64_t>(co) * d.ci;
        for (int ci = 0; ci < d.ci; ++ci) {
          const double wv = wr[ci];
          const double* xr = x + b * x_n + static_cast<std::int64_t>(ci) * hw;
          for (int i = 0; i < hw; ++i) yr[i] += wv * xr[i];
        }
      }
    }
    return;
  }

#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelCutoff)
  for (int b = 0; b < d.n; ++b) {
    for (int co = 0; co < d.co; ++co) {
      const int g = co / cog;
      const double* wg = w + (static_cast<std::int64_t>(co) * cig) * d.kh * d.kw;
      const double* xg = x + b * x_n + static_cast<std::int64_t>(g) * cig * d.hi * d.wi;
      double* yr = y + b * y_n + static_cast<std::int64_t>(co) * ho * wo;
      const double b0 = bias ? bias[co] : 0.0;
      for (int oh = 0; oh < ho; ++oh) {
        const int ih0 = oh * d.stride - d.pad;
        const int kh_lo = std::max(0, -ih0);
        const int kh_hi = std::min(d.kh, d.hi - ih0);
        for (int ow = 0; ow < wo; ++ow) {
          const int iw0 = ow * d.stride - d.pad;
          const int kw_lo = std::max(0, -iw0);
          const int kw_hi = std::min(d.kw, d.wi - iw0);
          double acc = b0;
          for (int ci = 0; ci < cig; ++ci) {
            const double* xc = xg + static_cast<std::int64_t>(ci) * d.hi * d.wi;
            const double* wc = wg + static_cast<std::int64_t>(ci) * d.kh * d.kw;
            for (int kh = kh_lo; kh < kh_hi; ++kh) {
              const double* xr = xc + static_cast<std::int64_t>(ih0 + kh) * d.wi + iw0;
              const double* wr = wc + kh * d.kw;
              for (int kw = kw_lo; kw < kw_hi; ++kw) acc += xr[kw] * wr[kw];
            }
          }
          yr[oh * wo + ow] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d) {
  const int ho = d.ho(), wo = d.wo();
  const int cig = d.ci / d.groups;
  const int cog = d.co / d.groups;
  const std::int64_t gx_n = static_cast<std::int64_t>(d.ci) * d.hi * d.wi;
  const std::int64_t gy_n = static_cast<std::int64_t>(d.co) * ho * wo;
  const std::int64_t work = static_cast<std::int64_t>(d.n) * gx_n * cog * d.kh * d.kw;

  if (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0 && d.groups == 1) {
    // 1x1: gx[b,ci,:] = sum_co w[co,ci] * gy[b,co,:], contiguous rows.
    const int hw = d.hi * d.wi;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelCutoff)
    for (int b = 0; b < d.n; ++b) {
      for (int ci = 0; ci < d.ci; ++ci) {
        double* gxr = gx + b * gx_n + static_cast<std::int64_t>(ci) * hw;
        for (int i = 0; i < hw; ++i) gxr[i] = 0.0;
        for (int co = 0; co < d.co; ++co) {
          const double wv = w[static_cast<std::int64_t>(co) * d.ci + ci];
          const double* gyr = gy + b * gy_n + static_cast<std::int64_t>(co) * hw;
          for (int i = 0; i < hw; ++i) gxr[i] += wv * gyr[i];
        }
      }
    }
    return;
  }

  // Gather form: each input pixel sums the output positions its value fed.
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelCutoff)
  for (int b = 0; b < d.n; ++b) {
    for (int ci = 0; ci < d.ci; ++ci) {
      const int g = ci / cig;
      const int ci_in_g = ci % cig;
      double* gxr = gx + b * gx_n + static_cast<std::int64_t>(ci) * d.hi * d.wi;
      if (d.stride == 1) {
        // Division-free form: oh = ih + pad - kh directly.
        for (int ih = 0; ih < d.hi; ++ih) {
          const int kh_lo = std::max(0, ih + d.pad - (ho - 1));
          const int kh_hi = std::min(d.kh, ih + d.pad + 1);
          for (int iw = 0; iw < d.wi; ++iw) {
            const int kw_lo = std::max(0, iw + d.pad - (wo - 1));
            const int kw_hi = std::min(d.kw, iw + d.pad + 1);
            double acc = 0.0;
            for (int cg = 0; cg < cog; ++cg) {
              const int co = g * cog + cg;
              const double* gyc = gy + b * gy_n + static_cast<std::int64_t>(co) * ho * wo;
              const double* wc =
                  w + (static_cast<std::int64_t>(co) * cig + ci_in_g) * d.kh * d.kw;
              for (int kh = kh_lo; kh < kh_hi; ++kh) {
                const int oh = ih + d.pad - kh;
                const double* gyr = gyc + static_cast<std::int64_t>(oh) * wo;
                const double* wr = wc + kh * d.kw;
                const int base = iw + d.pad;
                for (int kw = kw_lo; kw < kw_hi; ++kw) acc += gyr[base - kw] * wr[kw];
              }
            }
            gxr[ih * d.wi + iw] = acc;
          }
        }
        continue;
      }
      for (int ih = 0; ih < d.hi; ++ih) {
        for (int iw = 0; iw < d.wi; ++iw) {
          double acc = 0.0;
          for (int kh = 0; kh < d.kh; ++kh) {
            const int oh_num = ih + d.pad - kh;
            if (oh_num < 0 || oh_num % d.stride != 0) continue;
            const int oh = oh_num / d.stride;
            if (oh >= ho) continue;
            for (int kw = 0; kw < d.kw; ++kw) {
              const int ow_num = iw + d.pad - kw;
              if (ow_num < 0 || ow_num % d.stride != 0) continue;
              const int ow = ow_num / d.stride;
              if (ow >= wo) continue;
              for (int cg = 0; cg < cog; ++cg) {
                const int co = g * cog + cg;
                acc += gy[b * gy_n + (static_cast<std::int64_t>(co) * ho + oh) * wo + ow] *
                       w[((static_cast<std::int64_t>(co) * cig + ci_in_g) * d.kh + kh) * d.kw + kw];
              }
            }
          }
          gxr[ih * d.wi + iw] = acc;
        }
      }
    }
  }
}

void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d) {
  const int ho = d.ho(), wo = d.wo();
  const int cig = d.ci / d.groups;
  const int cog = d.co / d.groups;
  const std::int64_t x_n = static_cast<std::int64_t>(d.ci) * d.hi * d.wi;
  const std::int64_t gy_n = static_cast<std::int64_t>(d.co) * ho * wo;

  if (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0 && d.groups == 1) {
    // 1x1: gw[co,ci] = dot(gy[:,co,:], x[:,ci,:]), both rows contiguous.
    const int hw = d.hi * d.wi;
#pragma omp parallel for schedule(static) if (d.co > 1)
    for (int co = 0; co < d.co; ++co) {
      double* gwr = gw + static_cast<std::int64_t>(co) * d.ci;
      for (int ci = 0; ci < d.ci; ++ci) gwr[ci] = 0.0;
      for (int b = 0; b < d.n; ++b) {
        const double* gyr = gy + b * gy_n + static_cast<std::int64_t>(co) * hw;
        for (int ci = 0; ci < d.ci; ++ci) {
          const double* xr = x + b * x_n + static_cast<std::int64_t>(ci) * hw;
          double acc = 0.0;
          for (int i = 0; i < hw; ++i) acc += gyr[i] * xr[i];
          gwr[ci] += acc;
        }
      }
    }
    return;
  }

  // Each thread owns the full gw slice of one output channel.
#pragma omp parallel for schedule(static) if (d.co > 1)
  for (int co = 0; co < d.co; ++co) {
    const int g = co / cog;
    double* gwc = gw + (static_cast<std::int64_t>(co) * cig) * d.kh * d.kw;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(cig) * d.kh * d.kw; ++i) gwc[i] = 0.0;
    for (int b = 0; b < d.n; ++b) {
      const double* xg = x + b * x_n + static_cast<std::int64_t>(g) * cig * d.hi * d.wi;
      const double* gyr = gy + b * gy_n + static_cast<std::int64_t>(co) * ho * wo;
      for (int oh = 0; oh < ho; ++oh) {
        const int ih0 = oh * d.stride - d.pad;
        const int kh_lo = std::max(0, -ih0);
        const int kh_hi = std::min(d.kh, d.hi - ih0);
        for (int ow = 0; ow < wo; ++ow) {
          const double g0 = gyr[oh * wo + ow];
          const int iw0 = ow * d.stride - d.pad;
          const int kw_lo = std::max(0, -iw0);
          const int kw_hi = std::min(d.kw, d.wi - iw0);
          for (int ci = 0; ci < cig; ++ci) {
            const double* xc = xg + static_cast<std::int64_t>(ci) * d.hi * d.wi;
            double* gwr = gwc + static_cast<std::int64_t>(ci) * d.kh * d.kw;
            for (int kh = kh_lo; kh < kh_hi; ++kh) {
              const double* xr = xc + static_cast<std::int64_t>(ih0 + kh) * d.wi + iw0;
              for (int kw = kw_lo; kw < kw_hi; ++kw) gwr[kh * d.kw + kw] += g0 * xr[kw];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_bias(const double* gy, double* gb, int n, int co, int ho, int wo) {
  const std::int64_t plane = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static) if (co > 1)
  for (int c = 0; c < co; ++c) {
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
      const double* p = gy + (static_cast<std::int64_t>(b) * co + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    gb[c] = acc;
  }
}

void matmul(const double* a, const double* b, double* c, int batch, int p, int k, int q,
            bool trans_a, bool trans_b) {
  const std::int64_t a_n = static_cast<std::int64_t>(p) * k;
  const std::int64_t b_n = static_cast<std::int64_t>(k) * q;
  const std::int64_t c_n = static_cast<std::int64_t>(p) * q;
  const std::int64_t work = static_cast<std::int64_t>(batch) * p * k * q;

#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelCutoff)
  for (int bt = 0; bt < batch; ++bt) {
    for (int i = 0; i < p; ++i) {
      const double* ab = a + bt * a_n;
      const double* bb = b + bt * b_n;
      double* cr = c + bt * c_n + static_cast<std::int64_t>(i) * q;
      for (int j = 0; j < q; ++j) cr[j] = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        const double av = trans_a ? ab[static_cast<std::int64_t>(kk) * p + i]
                                  : ab[static_cast<std::int64_t>(i) * k + kk];
        if (trans_b) {
          const double* br = bb + static_cast<std::int64_t>(kk);
          for (int j = 0; j < q; ++j) cr[j] += av * br[static_cast<std::int64_t>(j) * k];
        } else {
          const double* br = bb + static_cast<std::int64_t>(kk) * q;
          for (int j = 0; j < q; ++j) cr[j] += av * br[j];
        }
      }
    }
  }
}

void softmax(const double* x, double* y, std::int64_t outer, std::int64_t len,
             std::int64_t inner) {
  const std::int64_t slices = outer * inner;
#pragma omp parallel for collapse(2) schedule(static) if (slices* len > kParallelCutoff)
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const double* xs = x + o * len * inner + in;
      double* ys = y + o * len * inner + in;
      double mx = xs[0];
      for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * inner]);
      double sum = 0.0;
      for (std::int64_t i = 0; i < len; ++i) {
        const double e = std::exp(xs[i * inner] - mx);
        ys[i * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::int64_t i = 0; i < len; ++i) ys[i * inner] *= inv;
    }
  }
}

void softmax_backward(const double* y, const double* gy, double* gx, std::int64_t outer,
                      std::int64_t len, std::int64_t inner) {
  const std::int64_t slices = outer * inner;
#pragma omp parallel for collapse(2) schedule(static) if (slices* len > kParallelCutoff)
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const double* ys = y + o * len * inner + in;
      const double* gs = gy + o * len * inner + in;
      double* xs = gx + o * len * inner + in;
      double dot = 0.0;
      for (std::int64_t i = 0; i < len; ++i) dot += ys[i * inner] * gs[i * inner];
      for (std::int64_t i = 0; i < len; ++i) {
        xs[i * inner] = (gs[i * inner] - dot) * ys[i * inner];
      }
    }
  }
}

namespace {
struct AxisMap {
  int i0, i1;      // source indices
  double w0, w1;   // interpolation weights
};

// Align-corners-false sample positions, clamped to the valid range.
void build_axis_map(int in, int out, AxisMap* m) {
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double f = std::floor(src);
    int i0 = static_cast<int>(f);
    double w1 = src - f;
    int i1 = i0 + 1;
    if (i0 < 0) {
      i0 = 0;
      i1 = 0;
      w1 = 0.0;
    }
    if (i1 >= in) {
      i1 = in - 1;
      if (i0 >= in) i0 = in - 1;
      if (i0 == i1) w1 = 0.0;
    }
    m[o] = AxisMap{i0, i1, 1.0 - w1, w1};
  }
}
}  // namespace

void resize_bilinear_forward(const double* x, double* y, int planes, int hi, int wi, int ho,
                             int wo) {
  std::vector<AxisMap> hm(ho), wm(wo);
  build_axis_map(hi, ho, hm.data());
  build_axis_map(wi, wo, wm.data());
  const std::int64_t in_plane = static_cast<std::int64_t>(hi) * wi;
  const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static) if (planes* out_plane > kParallelCutoff)
  for (int p = 0; p < planes; ++p) {
    const double* xp = x + p * in_plane;
    double* yp = y + p * out_plane;
    for (int oh = 0; oh < ho; ++oh) {
      const AxisMap& mh = hm[oh];
      const double* r0 = xp + static_cast<std::int64_t>(mh.i0) * wi;
      const double* r1 = xp + static_cast<std::int64_t>(mh.i1) * wi;
      for (int ow = 0; ow < wo; ++ow) {
        const AxisMap& mw = wm[ow];
        yp[oh * wo + ow] = mh.w0 * (mw.w0 * r0[mw.i0] + mw.w1 * r0[mw.i1]) +
                           mh.w1 * (mw.w0 * r1[mw.i0] + mw.w1 * r1[mw.i1]);
      }
    }
  }
}

void resize_bilinear_backward(const double* gy, double* gx, int planes, int hi, int wi, int ho,
                              int wo) {
  std::vector<AxisMap> hm(ho), wm(wo);
  build_axis_map(hi, ho, hm.data());
  build_axis_map(wi, wo, wm.data());
  const std::int64_t in_plane = static_cast<std::int64_t>(hi) * wi;
  const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
  // Scatter within a plane stays on one thread, so no write races.
#pragma omp parallel for schedule(static) if (planes* out_plane > kParallelCutoff)
  for (int p = 0; p < planes; ++p) {
    const double* gp = gy + p * out_plane;
    double* xp = gx + p * in_plane;
    for (std::int64_t i = 0; i < in_plane; ++i) xp[i] = 0.0;
    for (int oh = 0; oh < ho; ++oh) {
      const AxisMap& mh = hm[oh];
      for (int ow = 0; ow < wo; ++ow) {
        const AxisMap& mw = wm[ow];
        const double g = gp[oh * wo + ow];
        xp[static_cast<std::int64_t>(mh.i0) * wi + mw.i0] += mh.w0 * mw.w0 * g;
        xp[static_cast<std::int64_t>(mh.i0) * wi + mw.i1] += mh.w0 * mw.w1 * g;
        xp[static_cast<std::int64_t>(mh.i1) * wi + mw.i0] += mh.w1 * mw.w0 * g;
        xp[static_cast<std::int64_t>(mh.i1) * wi + mw.i1] += mh.w1 * mw.w1 * g;
      }
    }
  }
}

void box_mean(const double* m, double* out, int planes, int h, int w, int radius) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
#pragma omp parallel for schedule(static) if (planes* plane > kParallelCutoff)
  for (int p = 0; p < planes; ++p) {
    const double* mp = m + p * plane;
    double* op = out + p * plane;
    // Row prefix sums make the clipped window a four-corner lookup.
    std::vector<double> integral(static_cast<std::size_t>((h + 1) * (w + 1)), 0.0);
    for (int i = 0; i < h; ++i) {
      double row = 0.0;
      for (int j = 0; j < w; ++j) {
        row += mp[i * w + j];
        integral[(i + 1) * (w + 1) + (j + 1)] = integral[i * (w + 1) + (j + 1)] + row;
      }
    }
    for (int i = 0; i < h; ++i) {
      const int i0 = std::max(0, i - radius), i1 = std::min(h - 1, i + radius);
      for (int j = 0; j < w; ++j) {
        const int j0 = std::max(0, j - radius), j1 = std::min(w - 1, j + radius);
        const double s = integral[(i1 + 1) * (w + 1) + (j1 + 1)] -
                         integral[i0 * (w + 1) + (j1 + 1)] -
                         integral[(i1 + 1) * (w + 1) + j0] + integral[i0 * (w + 1) + j0];
        op[i * w + j] = s / ((i1 - i0 + 1) * (j1 - j0 + 1));
      }
    }
  }
}

}  // namespace duat::kernels
