// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mvdet/tensor.hpp"

namespace mvdet {

// A trainable tensor with its gradient and momentum buffer.
template <class T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  TensorT<T> velocity;
};

template <class T>
class ParamStoreT {
 public:
  ParamT<T>& add(const std::string& name, TensorT<T> init);
  ParamT<T>* find(const std::string& name);
  const ParamT<T>* find(const std::string& name) const;
  const std::vector<std::unique_ptr<ParamT<T>>>& items() const { return items_; }
  void zero_grads();
  int64_t total_elements() const;

 private:
  std::vector<std::unique_ptr<ParamT<T>>> items_;
};

// Eager reverse-mode tape. Ops compute values immediately and push a backward
// closure; backward() replays the closures in reverse, accumulating gradients
// additively at fan-out, then adds leaf gradients into their bound params.
// With grad_enabled = false the tape only computes values (inference).
//
// In double precision every op result is scanned for NaN/Inf; float skips the
// scan (fast mode).
template <class T>
class TapeT {
 public:
  struct Val {
    int id = -1;
  };

  explicit TapeT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  Val constant(TensorT<T> v);
  Val param(ParamT<T>& p);

  Val add(Val a, Val b);
  Val scale(Val a, T c);
  Val sum(Val a);
  Val relu(Val x);
  Val sigmoid(Val x);
  Val conv2d(Val x, Val w, Val b, int stride, int pad);
  Val max_pool2d(Val x, int k, int stride);
  Val global_avg_pool(Val x);
  Val global_max_pool(Val x);
  Val fully_connected(Val x, Val w, Val b);
  Val concat(const std::vector<Val>& xs, int axis);
  Val upsample_nearest(Val x, int factor);
  Val mul_channel(Val x, Val s);

  // Detection-head unpacking: x is (1, r*5, h, w) with per-ratio channel
  // blocks [score, dx, dy, dw, dh]; outputs are ordered (row, col, ratio).
  Val scores_from_head(Val x, int n_ratio);
  Val deltas_from_head(Val x, int n_ratio);

  // Losses (targets are plain tensors; they never carry gradients).
  Val softmax_cross_entropy(Val logits, const TensorT<T>& target_rows);
  Val mse(Val pred, const TensorT<T>& target);
  Val bce_with_logits_masked(Val logits, const TensorT<T>& labels, const TensorT<T>& mask);
  Val smooth_l1_masked(Val pred, const TensorT<T>& targets, const TensorT<T>& mask);

  void backward(Val loss);

  const TensorT<T>& value(Val v) const;
  const TensorT<T>& grad(Val v) const;
  bool grad_enabled() const { return grad_enabled_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    bool rg = false;
    ParamT<T>* bound = nullptr;
  };

  Val make_node(TensorT<T> value, bool rg);
  Node& node(Val v);
  const Node& node(Val v) const;
  bool rg_of(Val v) const { return node(v).rg; }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backops_;
  std::vector<std::pair<ParamT<T>*, int>> bound_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

using Tape = TapeT<double>;
using Param = ParamT<double>;
using ParamStore = ParamStoreT<double>;

}  // namespace mvdet
