// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "mvdet/error.hpp"

namespace mvdet::kernels {

// Shapes for a 2-D convolution: input (n, ci, h, w), weights (co, ci, kh, kw),
// output (n, co, ho, wo).
struct ConvDims {
  int n, ci, h, w;
  int co, kh, kw;
  int stride, pad;
  int ho, wo;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

ConvDims make_conv_dims(int n, int ci, int h, int w, int co, int kh, int kw, int stride, int pad);

// All forward kernels overwrite their outputs; all backward kernels ACCUMULATE
// (+=) into the gradient buffers so fan-in sums naturally. Null gradient
// pointers skip that component. Parallel loops partition output elements only
// and each element's reduction runs serially in a fixed order, so results are
// bitwise identical for any thread count.

template <class T>
void conv2d_forward(const T* x, const T* wt, const T* bias, const ConvDims& d, T* y);

template <class T>
void conv2d_backward(const T* x, const T* wt, const ConvDims& d, const T* gy, T* gx, T* gw, T* gb);

// x (n, dim) * w (k, dim)^T + b (k) -> y (n, k)
template <class T>
void fc_forward(const T* x, const T* w, const T* b, int n, int dim, int k, T* y);

template <class T>
void fc_backward(const T* x, const T* w, int n, int dim, int k, const T* gy, T* gx, T* gw, T* gb);

// Max pooling with square kernel. argmax stores, per output element, the flat
// in-plane index of the first maximal input (row-major scan order).
template <class T>
void maxpool_forward(const T* x, int n, int c, int h, int w, int k, int stride, T* y, int ho,
                     int wo, int* argmax);

template <class T>
void maxpool_backward(const int* argmax, int n, int c, int h, int w, int ho, int wo, const T* gy,
                      T* gx);

// Global pools collapse each (h*w) plane to one value per channel.
template <class T>
void global_avgpool_forward(const T* x, int n, int c, int hw, T* y);

template <class T>
void global_avgpool_backward(int n, int c, int hw, const T* gy, T* gx);

template <class T>
void global_maxpool_forward(const T* x, int n, int c, int hw, T* y, int* argmax);

template <class T>
void global_maxpool_backward(const int* argmax, int n, int c, int hw, const T* gy, T* gx);

}  // namespace mvdet::kernels
