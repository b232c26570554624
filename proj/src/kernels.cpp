// SPDX-License-Identifier: Apache-2.0
#include "mvdet/kernels.hpp"

#include <algorithm>

namespace mvdet::kernels {

ConvDims make_conv_dims(int n, int ci, int h, int w, int co, int kh, int kw, int stride, int pad) {
  if (n < 1 || ci < 1 || h < 1 || w < 1 || co < 1 || kh < 1 || kw < 1)
    fail(Errc::bad_argument, "conv dims must be positive");
  if (stride < 1) fail(Errc::bad_argument, "conv stride must be >= 1");
  if (pad < 0) fail(Errc::bad_argument, "conv pad must be >= 0");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    fail(Errc::bad_argument, "conv kernel larger than padded input");
  ConvDims d{n, ci, h, w, co, kh, kw, stride, pad, 0, 0};
  d.ho = conv_out_dim(h, kh, stride, pad);
  d.wo = conv_out_dim(w, kw, stride, pad);
  return d;
}

namespace {

// Output positions [lo, hi) for which 0 <= o*stride + off - pad < in.
inline void out_range(int in, int off, int stride, int pad, int out, int* lo, int* hi) {
  int a = pad - off;  // need o*stride >= a
  int l = a <= 0 ? 0 : (a + stride - 1) / stride;
  int top = in - 1 + pad - off;  // need o*stride <= top
  int h = top < 0 ? 0 : top / stride + 1;
  h = std::min(h, out);
  *lo = std::min(l, h);
  *hi = h;
}

}  // namespace

template <class T>
void conv2d_forward(const T* x, const T* wt, const T* bias, const ConvDims& d, T* y) {
  int64_t planes = static_cast<int64_t>(d.n) * d.co;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    int n = static_cast<int>(p / d.co);
    int co = static_cast<int>(p % d.co);
    T* yp = y + p * d.ho * d.wo;
    T bv = bias ? bias[co] : T(0);
    for (int i = 0; i < d.ho * d.wo; ++i) yp[i] = bv;
    for (int ci = 0; ci < d.ci; ++ci) {
      const T* xp = x + (static_cast<int64_t>(n) * d.ci + ci) * d.h * d.w;
      const T* wp = wt + (static_cast<int64_t>(co) * d.ci + ci) * d.kh * d.kw;
      for (int ky = 0; ky < d.kh; ++ky) {
        int oy_lo, oy_hi;
        out_range(d.h, ky, d.stride, d.pad, d.ho, &oy_lo, &oy_hi);
        for (int kx = 0; kx < d.kw; ++kx) {
          int ox_lo, ox_hi;
          out_range(d.w, kx, d.stride, d.pad, d.wo, &ox_lo, &ox_hi);
          T wv = wp[ky * d.kw + kx];
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            int iy = oy * d.stride + ky - d.pad;
            const T* xrow = xp + static_cast<int64_t>(iy) * d.w + (kx - d.pad);
            T* yrow = yp + static_cast<int64_t>(oy) * d.wo;
            for (int ox = ox_lo; ox < ox_hi; ++ox) yrow[ox] += wv * xrow[ox * d.stride];
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward(const T* x, const T* wt, const ConvDims& d, const T* gy, T* gx, T* gw,
                     T* gb) {
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.co; ++co) {
      T acc = 0;
      for (int n = 0; n < d.n; ++n) {
        const T* gp = gy + (static_cast<int64_t>(n) * d.co + co) * d.ho * d.wo;
        for (int i = 0; i < d.ho * d.wo; ++i) acc += gp[i];
      }
      gb[co] += acc;
    }
  }

  if (gw) {
    int64_t pairs = static_cast<int64_t>(d.co) * d.ci;
#pragma omp parallel for schedule(static)
    for (int64_t pc = 0; pc < pairs; ++pc) {
      int co = static_cast<int>(pc / d.ci);
      int ci = static_cast<int>(pc % d.ci);
      T* gwp = gw + pc * d.kh * d.kw;
      for (int ky = 0; ky < d.kh; ++ky) {
        int oy_lo, oy_hi;
        out_range(d.h, ky, d.stride, d.pad, d.ho, &oy_lo, &oy_hi);
        for (int kx = 0; kx < d.kw; ++kx) {
          int ox_lo, ox_hi;
          out_range(d.w, kx, d.stride, d.pad, d.wo, &ox_lo, &ox_hi);
          T acc = 0;
          for (int n = 0; n < d.n; ++n) {
            const T* xp = x + (static_cast<int64_t>(n) * d.ci + ci) * d.h * d.w;
            const T* gp = gy + (static_cast<int64_t>(n) * d.co + co) * d.ho * d.wo;
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              int iy = oy * d.stride + ky - d.pad;
              const T* xrow = xp + static_cast<int64_t>(iy) * d.w + (kx - d.pad);
              const T* grow = gp + static_cast<int64_t>(oy) * d.wo;
              for (int ox = ox_lo; ox < ox_hi; ++ox) acc += grow[ox] * xrow[ox * d.stride];
            }
          }
          gwp[ky * d.kw + kx] += acc;
        }
      }
    }
  }

  if (gx) {
    // Gather form: each input pixel sums the output gradients it touched.
    int64_t planes = static_cast<int64_t>(d.n) * d.ci;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < planes; ++p) {
      int n = static_cast<int>(p / d.ci);
      int ci = static_cast<int>(p % d.ci);
      T* gxp = gx + p * d.h * d.w;
      for (int iy = 0; iy < d.h; ++iy) {
        for (int ix = 0; ix < d.w; ++ix) {
          T acc = 0;
          for (int ky = 0; ky < d.kh; ++ky) {
            int t = iy + d.pad - ky;
            if (t < 0 || t % d.stride) continue;
            int oy = t / d.stride;
            if (oy >= d.ho) continue;
            for (int kx = 0; kx < d.kw; ++kx) {
              int u = ix + d.pad - kx;
              if (u < 0 || u % d.stride) continue;
              int ox = u / d.stride;
              if (ox >= d.wo) continue;
              for (int co = 0; co < d.co; ++co) {
                T wv = wt[((static_cast<int64_t>(co) * d.ci + ci) * d.kh + ky) * d.kw + kx];
                T gv = gy[((static_cast<int64_t>(n) * d.co + co) * d.ho + oy) * d.wo + ox];
                acc += wv * gv;
              }
            }
          }
          gxp[static_cast<int64_t>(iy) * d.w + ix] += acc;
        }
      }
    }
  }
}

template <class T>
void fc_forward(const T* x, const T* w, const T* b, int n, int dim, int k, T* y) {
  int64_t cells = static_cast<int64_t>(n) * k;
#pragma omp parallel for schedule(static) if (cells >= 64)
  for (int64_t cell = 0; cell < cells; ++cell) {
    int i = static_cast<int>(cell / k);
    int j = static_cast<int>(cell % k);
    const T* xi = x + static_cast<int64_t>(i) * dim;
    const T* wj = w + static_cast<int64_t>(j) * dim;
    T acc = b ? b[j] : T(0);
    for (int t = 0; t < dim; ++t) acc += xi[t] * wj[t];
    y[cell] = acc;
  }
}

template <class T>
void fc_backward(const T* x, const T* w, int n, int dim, int k, const T* gy, T* gx, T* gw, T* gb) {
  if (gb) {
    for (int j = 0; j < k; ++j) {
      T acc = 0;
      for (int i = 0; i < n; ++i) acc += gy[static_cast<int64_t>(i) * k + j];
      gb[j] += acc;
    }
  }
  if (gw) {
    int64_t cells = static_cast<int64_t>(k) * dim;
#pragma omp parallel for schedule(static) if (cells >= 256)
    for (int64_t cell = 0; cell < cells; ++cell) {
      int j = static_cast<int>(cell / dim);
      int t = static_cast<int>(cell % dim);
      T acc = 0;
      for (int i = 0; i < n; ++i)
        acc += gy[static_cast<int64_t>(i) * k + j] * x[static_cast<int64_t>(i) * dim + t];
      gw[cell] += acc;
    }
  }
  if (gx) {
    int64_t cells = static_cast<int64_t>(n) * dim;
#pragma omp parallel for schedule(static) if (cells >= 256)
    for (int64_t cell = 0; cell < cells; ++cell) {
      int i = static_cast<int>(cell / dim);
      int t = static_cast<int>(cell % dim);
      T acc = 0;
      for (int j = 0; j < k; ++j)
        acc += gy[static_cast<int64_t>(i) * k + j] * w[static_cast<int64_t>(j) * dim + t];
      gx[cell] += acc;
    }
  }
}

template <class T>
void maxpool_forward(const T* x, int n, int c, int h, int w, int k, int stride, T* y, int ho,
                     int wo, int* argmax) {
  if (k < 1 || stride < 1) fail(Errc::bad_argument, "pool kernel/stride must be >= 1");
  if (h < k || w < k) fail(Errc::bad_argument, "pool kernel larger than input");
  int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = x + p * h * w;
    T* yp = y + p * ho * wo;
    int* ap = argmax + p * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int iy0 = oy * stride, ix0 = ox * stride;
        int best_idx = iy0 * w + ix0;
        T best = xp[best_idx];
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            int idx = (iy0 + dy) * w + ix0 + dx;
            if (xp[idx] > best) {  // first maximal wins ties
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        yp[oy * wo + ox] = best;
        ap[oy * wo + ox] = best_idx;
      }
    }
  }
}

template <class T>
void maxpool_backward(const int* argmax, int n, int c, int h, int w, int ho, int wo, const T* gy,
                      T* gx) {
  int64_t planes = static_cast<int64_t>(n) * c;
  // Scatter within a plane is serial; planes are independent.
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* gp = gy + p * ho * wo;
    const int* ap = argmax + p * ho * wo;
    T* gxp = gx + p * h * w;
    for (int i = 0; i < ho * wo; ++i) gxp[ap[i]] += gp[i];
  }
}

template <class T>
void global_avgpool_forward(const T* x, int n, int c, int hw, T* y) {
  int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static) if (planes >= 8)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = x + p * hw;
    T acc = 0;
    for (int i = 0; i < hw; ++i) acc += xp[i];
    y[p] = acc / static_cast<T>(hw);
  }
}

template <class T>
void global_avgpool_backward(int n, int c, int hw, const T* gy, T* gx) {
  int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static) if (planes >= 8)
  for (int64_t p = 0; p < planes; ++p) {
    T g = gy[p] / static_cast<T>(hw);
    T* gxp = gx + p * hw;
    for (int i = 0; i < hw; ++i) gxp[i] += g;
  }
}

template <class T>
void global_maxpool_forward(const T* x, int n, int c, int hw, T* y, int* argmax) {
  int64_t planes = static_cast<int64_t>(n) * c;
#pragma omp parallel for schedule(static) if (planes >= 8)
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = x + p * hw;
    int best = 0;
    for (int i = 1; i < hw; ++i)
      if (xp[i] > xp[best]) best = i;
    y[p] = xp[best];
    argmax[p] = best;
  }
}

template <class T>
void global_maxpool_backward(const int* argmax, int n, int c, int hw, const T* gy, T* gx) {
  int64_t planes = static_cast<int64_t>(n) * c;
  for (int64_t p = 0; p < planes; ++p) gx[p * hw + argmax[p]] += gy[p];
}

#define MVDET_INSTANTIATE(T)                                                                      \
  template void conv2d_forward<T>(const T*, const T*, const T*, const ConvDims&, T*);             \
  template void conv2d_backward<T>(const T*, const T*, const ConvDims&, const T*, T*, T*, T*);    \
  template void fc_forward<T>(const T*, const T*, const T*, int, int, int, T*);                   \
  template void fc_backward<T>(const T*, const T*, int, int, int, const T*, T*, T*, T*);          \
  template void maxpool_forward<T>(const T*, int, int, int, int, int, int, T*, int, int, int*);   \
  template void maxpool_backward<T>(const int*, int, int, int, int, int, int, const T*, T*);      \
  template void global_avgpool_forward<T>(const T*, int, int, int, T*);                           \
  template void global_avgpool_backward<T>(int, int, int, const T*, T*);                          \
  template void global_maxpool_forward<T>(const T*, int, int, int, T*, int*);                     \
  template void global_maxpool_backward<T>(const int*, int, int, int, const T*, T*);

MVDET_INSTANTIATE(float)
MVDET_INSTANTIATE(double)

#undef MVDET_INSTANTIATE

}  // namespace mvdet::kernels
