#include "duat/reference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace duat::ref {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int ho = d.ho(), wo = d.wo();
  const int cig = d.ci / d.groups;
  const int cog = d.co / d.groups;
  for (int b = 0; b < d.n; ++b) {
    for (int co = 0; co < d.co; ++co) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          double acc = bias ? bias[co] : 0.0;
          const int g = co / cog;
          for (int ci = 0; ci < cig; ++ci) {
            for (int kh = 0; kh < d.kh; ++kh) {
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ih = oh * d.stride - d.pad + kh;
                const int iw = ow * d.stride - d.pad + kw;
                if (ih < 0 || ih >= d.hi || iw < 0 || iw >= d.wi) continue;
                const double xv =
                    x[((static_cast<std::int64_t>(b) * d.ci + g * cig + ci) * d.hi + ih) * d.wi +
                      iw];
                const double wv =
                    w[((static_cast<std::int64_t>(co) * cig + ci) * d.kh + kh) * d.kw + kw];
                acc += xv * wv;
              }
            }
          }
          y[((static_cast<std::int64_t>(b) * d.co + co) * ho + oh) * wo + ow] = acc;
        }
      }
    }
  }
}

void matmul(const double* a, const double* b, double* c, int batch, int p, int k, int q,
            bool trans_a, bool trans_b) {
  for (int bt = 0; bt < batch; ++bt) {
    const double* ab = a + static_cast<std::int64_t>(bt) * p * k;
    const double* bb = b + static_cast<std::int64_t>(bt) * k * q;
    double* cb = c + static_cast<std::int64_t>(bt) * p * q;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < q; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) {
          const double av = trans_a ? ab[static_cast<std::int64_t>(kk) * p + i]
                                    : ab[static_cast<std::int64_t>(i) * k + kk];
          const double bv = trans_b ? bb[static_cast<std::int64_t>(j) * k + kk]
                                    : bb[static_cast<std::int64_t>(kk) * q + j];
          acc += av * bv;
        }
        cb[static_cast<std::int64_t>(i) * q + j] = acc;
      }
    }
  }
}

void softmax(const double* x, double* y, std::int64_t outer, std::int64_t len,
             std::int64_t inner) {
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const double* xs = x + o * len * inner + in;
      double* ys = y + o * len * inner + in;
      double mx = xs[0];
      for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * inner]);
      double sum = 0.0;
      for (std::int64_t i = 0; i < len; ++i) sum += std::exp(xs[i * inner] - mx);
      for (std::int64_t i = 0; i < len; ++i) ys[i * inner] = std::exp(xs[i * inner] - mx) / sum;
    }
  }
}

void resize_bilinear_forward(const double* x, double* y, int planes, int hi, int wi, int ho,
                             int wo) {
  const double sh = static_cast<double>(hi) / ho;
  const double sw = static_cast<double>(wi) / wo;
  auto clamp = [](int v, int hi_) { return std::min(std::max(v, 0), hi_ - 1); };
  for (int p = 0; p < planes; ++p) {
    const double* xp = x + static_cast<std::int64_t>(p) * hi * wi;
    double* yp = y + static_cast<std::int64_t>(p) * ho * wo;
    for (int oh = 0; oh < ho; ++oh) {
      const double src_h = (oh + 0.5) * sh - 0.5;
      const int h0 = static_cast<int>(std::floor(src_h));
      const double fh = src_h - h0;
      for (int ow = 0; ow < wo; ++ow) {
        const double src_w = (ow + 0.5) * sw - 0.5;
        const int w0 = static_cast<int>(std::floor(src_w));
        const double fw = src_w - w0;
        double acc = 0.0;
        for (int dh = 0; dh <= 1; ++dh) {
          for (int dw = 0; dw <= 1; ++dw) {
            const double weight = (dh ? fh : 1.0 - fh) * (dw ? fw : 1.0 - fw);
            acc += weight * xp[clamp(h0 + dh, hi) * wi + clamp(w0 + dw, wi)];
          }
        }
        yp[oh * wo + ow] = acc;
      }
    }
  }
}

void box_mean(const double* m, double* out, int planes, int h, int w, int radius) {
  for (int p = 0; p < planes; ++p) {
    const double* mp = m + static_cast<std::int64_t>(p) * h * w;
    double* op = out + static_cast<std::int64_t>(p) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double sum = 0.0;
        int count = 0;
        for (int di = -radius; di <= radius; ++di) {
          for (int dj = -radius; dj <= radius; ++dj) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
            sum += mp[ii * w + jj];
            ++count;
          }
        }
        op[i * w + j] = sum / count;
      }
    }
  }
}

void dense_attention(const double* q, const double* k, const double* v, double* out, int heads,
                     int t, int dh) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> row(static_cast<std::size_t>(t));
  for (int hd = 0; hd < heads; ++hd) {
    const double* qh = q + static_cast<std::int64_t>(hd) * t * dh;
    const double* kh = k + static_cast<std::int64_t>(hd) * t * dh;
    const double* vh = v + static_cast<std::int64_t>(hd) * t * dh;
    double* oh = out + static_cast<std::int64_t>(hd) * t * dh;
    for (int i = 0; i < t; ++i) {
      double mx = -1e300;
      for (int j = 0; j < t; ++j) {
        double s = 0.0;
        for (int d = 0; d < dh; ++d) s += qh[i * dh + d] * kh[j * dh + d];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < t; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (int d = 0; d < dh; ++d) {
        double acc = 0.0;
        for (int j = 0; j < t; ++j) acc += (row[j] / sum) * vh[j * dh + d];
        oh[i * dh + d] = acc;
      }
    }
  }
}

}  // namespace duat::ref
