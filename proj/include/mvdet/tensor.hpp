// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "mvdet/error.hpp"

namespace mvdet {

// Dense row-major tensor. T = double is the test/verification precision and
// rejects non-finite values at creation; T = float is the fast training
// precision and skips that scan.
template <class T>
struct TensorT {
  static_assert(std::is_floating_point_v<T>);
  static constexpr bool checks_finite = std::is_same_v<T, double>;

  std::vector<int> shape;
  std::vector<T> v;

  TensorT() = default;

  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(validate_shape()), T(0));
  }

  TensorT(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (validate_shape() != static_cast<int64_t>(v.size()))
      fail(Errc::size_mismatch, "tensor data length does not match shape");
    check_values();
  }

  static TensorT scalar(T x) { return TensorT({1}, {x}); }

  static TensorT full(std::vector<int> s, T x) {
    TensorT t(std::move(s));
    for (auto& e : t.v) e = x;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  T& at2(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  T at2(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }

  T& at4(int n, int c, int y, int x) {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  T at4(int n, int c, int y, int x) const {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  // Scans for NaN/Inf in test precision; no-op in fast precision.
  void check_values() const {
    if constexpr (checks_finite) {
      for (T x : v)
        if (!std::isfinite(x)) fail(Errc::numeric_failure, "non-finite value in tensor");
    }
  }

 private:
  int64_t validate_shape() const {
    if (shape.empty()) fail(Errc::bad_argument, "tensor rank must be >= 1");
    int64_t n = 1;
    for (int d : shape) {
      if (d < 1) fail(Errc::bad_argument, "tensor dims must be positive");
      n *= d;
    }
    return n;
  }
};

using Tensor = TensorT<double>;

template <class T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "(";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

}  // namespace mvdet
