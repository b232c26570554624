// SPDX-License-Identifier: Apache-2.0
#pragma once

// Naive single-threaded kernels, written as direct transcriptions of the
// defining sums with per-element bounds checks. They share no code with the
// parallel kernels in mvdet_core; tests compare the two, and the benchmark
// tool uses these as the baseline.

#include "mvdet/kernels.hpp"

namespace mvdet::ref {

template <class T>
void conv2d_forward(const T* x, const T* wt, const T* bias, const kernels::ConvDims& d, T* y);

template <class T>
void conv2d_backward(const T* x, const T* wt, const kernels::ConvDims& d, const T* gy, T* gx,
                     T* gw, T* gb);

template <class T>
void fc_forward(const T* x, const T* w, const T* b, int n, int dim, int k, T* y);

template <class T>
void fc_backward(const T* x, const T* w, int n, int dim, int k, const T* gy, T* gx, T* gw, T* gb);

template <class T>
void maxpool_forward(const T* x, int n, int c, int h, int w, int k, int stride, T* y, int ho,
                     int wo, int* argmax);

template <class T>
void maxpool_backward(const int* argmax, int n, int c, int h, int w, int ho, int wo, const T* gy,
                      T* gx);

template <class T>
void global_avgpool_forward(const T* x, int n, int c, int hw, T* y);

template <class T>
void global_maxpool_forward(const T* x, int n, int c, int hw, T* y, int* argmax);

}  // namespace mvdet::ref
