// SPDX-License-Identifier: Apache-2.0
#include "reference_kernels.hpp"

namespace mvdet::ref {

namespace {

template <class T>
inline T x_at(const T* x, const kernels::ConvDims& d, int n, int c, int iy, int ix) {
  if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) return T(0);
  return x[((static_cast<int64_t>(n) * d.ci + c) * d.h + iy) * d.w + ix];
}

}  // namespace

template <class T>
void conv2d_forward(const T* x, const T* wt, const T* bias, const kernels::ConvDims& d, T* y) {
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.co; ++co)
      for (int oy = 0; oy < d.ho; ++oy)
        for (int ox = 0; ox < d.wo; ++ox) {
          T acc = bias ? bias[co] : T(0);
          for (int ci = 0; ci < d.ci; ++ci)
            for (int ky = 0; ky < d.kh; ++ky)
              for (int kx = 0; kx < d.kw; ++kx) {
                T wv = wt[((static_cast<int64_t>(co) * d.ci + ci) * d.kh + ky) * d.kw + kx];
                acc += wv * x_at(x, d, n, ci, oy * d.stride + ky - d.pad, ox * d.stride + kx - d.pad);
              }
          y[((static_cast<int64_t>(n) * d.co + co) * d.ho + oy) * d.wo + ox] = acc;
        }
}

template <class T>
void conv2d_backward(const T* x, const T* wt, const kernels::ConvDims& d, const T* gy, T* gx,
                     T* gw, T* gb) {
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.co; ++co)
      for (int oy = 0; oy < d.ho; ++oy)
        for (int ox = 0; ox < d.wo; ++ox) {
          T g = gy[((static_cast<int64_t>(n) * d.co + co) * d.ho + oy) * d.wo + ox];
          if (gb) gb[co] += g;
          for (int ci = 0; ci < d.ci; ++ci)
            for (int ky = 0; ky < d.kh; ++ky)
              for (int kx = 0; kx < d.kw; ++kx) {
                int iy = oy * d.stride + ky - d.pad;
                int ix = ox * d.stride + kx - d.pad;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                int64_t wi = ((static_cast<int64_t>(co) * d.ci + ci) * d.kh + ky) * d.kw + kx;
                int64_t xi = ((static_cast<int64_t>(n) * d.ci + ci) * d.h + iy) * d.w + ix;
                if (gw) gw[wi] += g * x[xi];
                if (gx) gx[xi] += g * wt[wi];
              }
        }
}

template <class T>
void fc_forward(const T* x, const T* w, const T* b, int n, int dim, int k, T* y) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      T acc = b ? b[j] : T(0);
      for (int t = 0; t < dim; ++t)
        acc += x[static_cast<int64_t>(i) * dim + t] * w[static_cast<int64_t>(j) * dim + t];
      y[static_cast<int64_t>(i) * k + j] = acc;
    }
}

template <class T>
void fc_backward(const T* x, const T* w, int n, int dim, int k, const T* gy, T* gx, T* gw, T* gb) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      T g = gy[static_cast<int64_t>(i) * k + j];
      if (gb) gb[j] += g;
      for (int t = 0; t < dim; ++t) {
        if (gw) gw[static_cast<int64_t>(j) * dim + t] += g * x[static_cast<int64_t>(i) * dim + t];
        if (gx) gx[static_cast<int64_t>(i) * dim + t] += g * w[static_cast<int64_t>(j) * dim + t];
      }
    }
}

template <class T>
void maxpool_forward(const T* x, int n, int c, int h, int w, int k, int stride, T* y, int ho,
                     int wo, int* argmax) {
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const T* xp = x + p * h * w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        int best = -1;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            int idx = (oy * stride + dy) * w + ox * stride + dx;
            if (best < 0 || xp[idx] > xp[best]) best = idx;
          }
        y[p * ho * wo + oy * wo + ox] = xp[best];
        if (argmax) argmax[p * ho * wo + oy * wo + ox] = best;
      }
  }
}

template <class T>
void maxpool_backward(const int* argmax, int n, int c, int h, int w, int ho, int wo, const T* gy,
                      T* gx) {
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p)
    for (int i = 0; i < ho * wo; ++i) gx[p * h * w + argmax[p * ho * wo + i]] += gy[p * ho * wo + i];
}

template <class T>
void global_avgpool_forward(const T* x, int n, int c, int hw, T* y) {
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    T acc = 0;
    for (int i = 0; i < hw; ++i) acc += x[p * hw + i];
    y[p] = acc / static_cast<T>(hw);
  }
}

template <class T>
void global_maxpool_forward(const T* x, int n, int c, int hw, T* y, int* argmax) {
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    int best = 0;
    for (int i = 1; i < hw; ++i)
      if (x[p * hw + i] > x[p * hw + best]) best = i;
    y[p] = x[p * hw + best];
    if (argmax) argmax[p] = best;
  }
}

#define MVDET_REF_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const T*, const T*, const T*, const kernels::ConvDims&, T*);    \
  template void conv2d_backward<T>(const T*, const T*, const kernels::ConvDims&, const T*, T*,    \
                                   T*, T*);                                                       \
  template void fc_forward<T>(const T*, const T*, const T*, int, int, int, T*);                   \
  template void fc_backward<T>(const T*, const T*, int, int, int, const T*, T*, T*, T*);          \
  template void maxpool_forward<T>(const T*, int, int, int, int, int, int, T*, int, int, int*);   \
  template void maxpool_backward<T>(const int*, int, int, int, int, int, int, const T*, T*);      \
  template void global_avgpool_forward<T>(const T*, int, int, int, T*);                           \
  template void global_maxpool_forward<T>(const T*, int, int, int, T*, int*);

MVDET_REF_INSTANTIATE(float)
MVDET_REF_INSTANTIATE(double)

#undef MVDET_REF_INSTANTIATE

}  // namespace mvdet::ref
