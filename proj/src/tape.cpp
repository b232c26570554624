// SPDX-License-Identifier: Apache-2.0
#include "mvdet/tape.hpp"

#include <algorithm>
#include <cmath>

#include "mvdet/kernels.hpp"

namespace mvdet {

template <class T>
ParamT<T>& ParamStoreT<T>::add(const std::string& name, TensorT<T> init) {
  if (find(name)) fail(Errc::bad_argument, "duplicate parameter name: " + name);
  auto p = std::make_unique<ParamT<T>>();
  p->name = name;
  p->grad = TensorT<T>(init.shape);
  p->velocity = TensorT<T>(init.shape);
  p->value = std::move(init);
  items_.push_back(std::move(p));
  return *items_.back();
}

template <class T>
ParamT<T>* ParamStoreT<T>::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class T>
const ParamT<T>* ParamStoreT<T>::find(const std::string& name) const {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class T>
void ParamStoreT<T>::zero_grads() {
  for (auto& p : items_) std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
}

template <class T>
int64_t ParamStoreT<T>::total_elements() const {
  int64_t n = 0;
  for (const auto& p : items_) n += p->value.numel();
  return n;
}

template <class T>
typename TapeT<T>::Node& TapeT<T>::node(Val v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    fail(Errc::bad_argument, "invalid tape value handle");
  return nodes_[static_cast<size_t>(v.id)];
}

template <class T>
const typename TapeT<T>::Node& TapeT<T>::node(Val v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    fail(Errc::bad_argument, "invalid tape value handle");
  return nodes_[static_cast<size_t>(v.id)];
}

template <class T>
typename TapeT<T>::Val TapeT<T>::make_node(TensorT<T> value, bool rg) {
  value.check_values();
  Node n;
  n.rg = rg && grad_enabled_;
  if (n.rg) n.grad = TensorT<T>(value.shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
const TensorT<T>& TapeT<T>::value(Val v) const {
  return node(v).value;
}

template <class T>
const TensorT<T>& TapeT<T>::grad(Val v) const {
  const Node& n = node(v);
  if (!n.rg) fail(Errc::bad_argument, "value does not carry a gradient");
  return n.grad;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::constant(TensorT<T> v) {
  return make_node(std::move(v), false);
}

template <class T>
typename TapeT<T>::Val TapeT<T>::param(ParamT<T>& p) {
  for (const auto& [ptr, id] : bound_)
    if (ptr == &p) return Val{id};
  Val v = make_node(p.value, true);
  node(v).bound = &p;
  bound_.push_back({&p, v.id});
  return v;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::add(Val a, Val b) {
  const TensorT<T>& av = value(a);
  const TensorT<T>& bv = value(b);
  if (!av.same_shape(bv)) fail(Errc::bad_argument, "add: shape mismatch");
  TensorT<T> out(av.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  Val o = make_node(std::move(out), rg_of(a) || rg_of(b));
  if (node(o).rg)
    backops_.push_back([this, a, b, o] {
      const TensorT<T>& g = node(o).grad;
      if (node(a).rg)
        for (int64_t i = 0; i < g.numel(); ++i) node(a).grad[i] += g[i];
      if (node(b).rg)
        for (int64_t i = 0; i < g.numel(); ++i) node(b).grad[i] += g[i];
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::scale(Val a, T c) {
  const TensorT<T>& av = value(a);
  TensorT<T> out(av.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = c * av[i];
  Val o = make_node(std::move(out), rg_of(a));
  if (node(o).rg)
    backops_.push_back([this, a, o, c] {
      const TensorT<T>& g = node(o).grad;
      for (int64_t i = 0; i < g.numel(); ++i) node(a).grad[i] += c * g[i];
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::sum(Val a) {
  const TensorT<T>& av = value(a);
  T acc = 0;
  for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
  Val o = make_node(TensorT<T>::scalar(acc), rg_of(a));
  if (node(o).rg)
    backops_.push_back([this, a, o] {
      T g = node(o).grad[0];
      TensorT<T>& ga = node(a).grad;
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::relu(Val x) {
  const TensorT<T>& xv = value(x);
  TensorT<T> out(xv.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o] {
      const TensorT<T>& g = node(o).grad;
      const TensorT<T>& xv = node(x).value;
      TensorT<T>& gx = node(x).grad;
      for (int64_t i = 0; i < g.numel(); ++i)
        if (xv[i] > T(0)) gx[i] += g[i];
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::sigmoid(Val x) {
  const TensorT<T>& xv = value(x);
  TensorT<T> out(xv.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    T v = xv[i];
    if (v >= T(0)) {
      T e = std::exp(-v);
      out[i] = T(1) / (T(1) + e);
    } else {
      T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o] {
      const TensorT<T>& g = node(o).grad;
      const TensorT<T>& s = node(o).value;
      TensorT<T>& gx = node(x).grad;
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * s[i] * (T(1) - s[i]);
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::conv2d(Val x, Val w, Val b, int stride, int pad) {
  const TensorT<T>& xv = value(x);
  const TensorT<T>& wv = value(w);
  const TensorT<T>& bv = value(b);
  if (xv.ndim() != 4 || wv.ndim() != 4 || bv.ndim() != 1)
    fail(Errc::bad_argument, "conv2d: expected x(n,c,h,w), w(co,ci,kh,kw), b(co)");
  if (wv.dim(1) != xv.dim(1) || bv.dim(0) != wv.dim(0))
    fail(Errc::bad_argument, "conv2d: shape mismatch");
  kernels::ConvDims d = kernels::make_conv_dims(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                                                wv.dim(0), wv.dim(2), wv.dim(3), stride, pad);
  TensorT<T> out({d.n, d.co, d.ho, d.wo});
  kernels::conv2d_forward(xv.v.data(), wv.v.data(), bv.v.data(), d, out.v.data());
  Val o = make_node(std::move(out), rg_of(x) || rg_of(w) || rg_of(b));
  if (node(o).rg)
    backops_.push_back([this, x, w, b, o, d] {
      const TensorT<T>& g = node(o).grad;
      kernels::conv2d_backward(node(x).value.v.data(), node(w).value.v.data(), d, g.v.data(),
                               node(x).rg ? node(x).grad.v.data() : nullptr,
                               node(w).rg ? node(w).grad.v.data() : nullptr,
                               node(b).rg ? node(b).grad.v.data() : nullptr);
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::max_pool2d(Val x, int k, int stride) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4) fail(Errc::bad_argument, "max_pool2d: expected (n,c,h,w)");
  int h = xv.dim(2), w = xv.dim(3);
  if (k < 1 || stride < 1) fail(Errc::bad_argument, "max_pool2d: kernel/stride must be >= 1");
  if (h < k || w < k) fail(Errc::bad_argument, "max_pool2d: kernel larger than input");
  int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  TensorT<T> out({xv.dim(0), xv.dim(1), ho, wo});
  auto argmax = std::make_shared<std::vector<int>>(out.v.size());
  kernels::maxpool_forward(xv.v.data(), xv.dim(0), xv.dim(1), h, w, k, stride, out.v.data(), ho,
                           wo, argmax->data());
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, argmax, h, w, ho, wo] {
      const TensorT<T>& g = node(o).grad;
      kernels::maxpool_backward(argmax->data(), node(x).value.dim(0), node(x).value.dim(1), h, w,
                                ho, wo, g.v.data(), node(x).grad.v.data());
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::global_avg_pool(Val x) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4) fail(Errc::bad_argument, "global_avg_pool: expected (n,c,h,w)");
  int hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out({xv.dim(0), xv.dim(1)});
  kernels::global_avgpool_forward(xv.v.data(), xv.dim(0), xv.dim(1), hw, out.v.data());
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, hw] {
      const TensorT<T>& g = node(o).grad;
      kernels::global_avgpool_backward(node(x).value.dim(0), node(x).value.dim(1), hw, g.v.data(),
                                       node(x).grad.v.data());
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::global_max_pool(Val x) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4) fail(Errc::bad_argument, "global_max_pool: expected (n,c,h,w)");
  int hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out({xv.dim(0), xv.dim(1)});
  auto argmax = std::make_shared<std::vector<int>>(out.v.size());
  kernels::global_maxpool_forward(xv.v.data(), xv.dim(0), xv.dim(1), hw, out.v.data(),
                                  argmax->data());
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, argmax, hw] {
      const TensorT<T>& g = node(o).grad;
      kernels::global_maxpool_backward(argmax->data(), node(x).value.dim(0), node(x).value.dim(1),
                                       hw, g.v.data(), node(x).grad.v.data());
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::fully_connected(Val x, Val w, Val b) {
  const TensorT<T>& xv = value(x);
  const TensorT<T>& wv = value(w);
  const TensorT<T>& bv = value(b);
  if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1)
    fail(Errc::bad_argument, "fully_connected: expected x(n,d), w(k,d), b(k)");
  if (wv.dim(1) != xv.dim(1) || bv.dim(0) != wv.dim(0))
    fail(Errc::bad_argument, "fully_connected: shape mismatch");
  int n = xv.dim(0), dim = xv.dim(1), k = wv.dim(0);
  TensorT<T> out({n, k});
  kernels::fc_forward(xv.v.data(), wv.v.data(), bv.v.data(), n, dim, k, out.v.data());
  Val o = make_node(std::move(out), rg_of(x) || rg_of(w) || rg_of(b));
  if (node(o).rg)
    backops_.push_back([this, x, w, b, o, n, dim, k] {
      const TensorT<T>& g = node(o).grad;
      kernels::fc_backward(node(x).value.v.data(), node(w).value.v.data(), n, dim, k, g.v.data(),
                           node(x).rg ? node(x).grad.v.data() : nullptr,
                           node(w).rg ? node(w).grad.v.data() : nullptr,
                           node(b).rg ? node(b).grad.v.data() : nullptr);
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::concat(const std::vector<Val>& xs, int axis) {
  if (xs.empty()) fail(Errc::bad_argument, "concat: no inputs");
  const TensorT<T>& first = value(xs[0]);
  int rank = first.ndim();
  if (axis < 0 || axis >= rank) fail(Errc::bad_argument, "concat: axis out of range");
  int axis_total = 0;
  bool rg = false;
  for (Val x : xs) {
    const TensorT<T>& xv = value(x);
    if (xv.ndim() != rank) fail(Errc::bad_argument, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && xv.dim(i) != first.dim(i)) fail(Errc::bad_argument, "concat: shape mismatch");
    axis_total += xv.dim(axis);
    rg = rg || rg_of(x);
  }

  std::vector<int> oshape = first.shape;
  oshape[static_cast<size_t>(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= first.dim(i);

  TensorT<T> out(oshape);
  {
    int64_t off = 0;
    for (Val x : xs) {
      const TensorT<T>& xv = value(x);
      int64_t block = static_cast<int64_t>(xv.dim(axis)) * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(xv.v.data() + o * block, block,
                    out.v.data() + o * axis_total * inner + off);
      off += block;
    }
  }
  Val o = make_node(std::move(out), rg);
  if (node(o).rg) {
    std::vector<Val> inputs = xs;
    backops_.push_back([this, inputs, o, outer, inner, axis, axis_total] {
      const TensorT<T>& g = node(o).grad;
      int64_t off = 0;
      for (Val x : inputs) {
        const TensorT<T>& xv = node(x).value;
        int64_t block = static_cast<int64_t>(xv.dim(axis)) * inner;
        if (node(x).rg) {
          TensorT<T>& gx = node(x).grad;
          for (int64_t ot = 0; ot < outer; ++ot) {
            const T* src = g.v.data() + ot * axis_total * inner + off;
            T* dst = gx.v.data() + ot * block;
            for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        off += block;
      }
    });
  }
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::upsample_nearest(Val x, int factor) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4) fail(Errc::bad_argument, "upsample_nearest: expected (n,c,h,w)");
  if (factor < 1) fail(Errc::bad_argument, "upsample_nearest: factor must be >= 1");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  TensorT<T> out({n, c, h * factor, w * factor});
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const T* xp = xv.v.data() + p * h * w;
    T* yp = out.v.data() + p * h * w * factor * factor;
    for (int y = 0; y < h * factor; ++y)
      for (int xq = 0; xq < w * factor; ++xq)
        yp[static_cast<int64_t>(y) * w * factor + xq] = xp[static_cast<int64_t>(y / factor) * w + xq / factor];
  }
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, n, c, h, w, factor] {
      const TensorT<T>& g = node(o).grad;
      TensorT<T>& gx = node(x).grad;
      for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
        const T* gp = g.v.data() + p * h * w * factor * factor;
        T* gxp = gx.v.data() + p * h * w;
        for (int iy = 0; iy < h; ++iy)
          for (int ix = 0; ix < w; ++ix) {
            T acc = 0;
            for (int dy = 0; dy < factor; ++dy)
              for (int dx = 0; dx < factor; ++dx)
                acc += gp[static_cast<int64_t>(iy * factor + dy) * w * factor + ix * factor + dx];
            gxp[static_cast<int64_t>(iy) * w + ix] += acc;
          }
      }
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::mul_channel(Val x, Val s) {
  const TensorT<T>& xv = value(x);
  const TensorT<T>& sv = value(s);
  if (xv.ndim() != 4 || sv.ndim() != 2)
    fail(Errc::bad_argument, "mul_channel: expected x(n,c,h,w), s(n,c)");
  if (sv.dim(0) != xv.dim(0) || sv.dim(1) != xv.dim(1))
    fail(Errc::bad_argument, "mul_channel: shape mismatch");
  int hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out(xv.shape);
  for (int64_t p = 0; p < static_cast<int64_t>(xv.dim(0)) * xv.dim(1); ++p) {
    T sc = sv[p];
    const T* xp = xv.v.data() + p * hw;
    T* yp = out.v.data() + p * hw;
    for (int i = 0; i < hw; ++i) yp[i] = sc * xp[i];
  }
  Val o = make_node(std::move(out), rg_of(x) || rg_of(s));
  if (node(o).rg)
    backops_.push_back([this, x, s, o, hw] {
      const TensorT<T>& g = node(o).grad;
      const TensorT<T>& xv = node(x).value;
      const TensorT<T>& sv = node(s).value;
      int64_t planes = static_cast<int64_t>(xv.dim(0)) * xv.dim(1);
      for (int64_t p = 0; p < planes; ++p) {
        const T* gp = g.v.data() + p * hw;
        if (node(x).rg) {
          T* gxp = node(x).grad.v.data() + p * hw;
          T sc = sv[p];
          for (int i = 0; i < hw; ++i) gxp[i] += sc * gp[i];
        }
        if (node(s).rg) {
          const T* xp = xv.v.data() + p * hw;
          T acc = 0;
          for (int i = 0; i < hw; ++i) acc += gp[i] * xp[i];
          node(s).grad[p] += acc;
        }
      }
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::scores_from_head(Val x, int n_ratio) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4 || xv.dim(0) != 1 || xv.dim(1) != n_ratio * 5)
    fail(Errc::bad_argument, "scores_from_head: expected (1, ratios*5, h, w)");
  int h = xv.dim(2), w = xv.dim(3);
  TensorT<T> out({h * w * n_ratio});
  for (int y = 0; y < h; ++y)
    for (int xc = 0; xc < w; ++xc)
      for (int r = 0; r < n_ratio; ++r)
        out[(static_cast<int64_t>(y) * w + xc) * n_ratio + r] = xv.at4(0, r * 5, y, xc);
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, h, w, n_ratio] {
      const TensorT<T>& g = node(o).grad;
      TensorT<T>& gx = node(x).grad;
      for (int y = 0; y < h; ++y)
        for (int xc = 0; xc < w; ++xc)
          for (int r = 0; r < n_ratio; ++r)
            gx.at4(0, r * 5, y, xc) += g[(static_cast<int64_t>(y) * w + xc) * n_ratio + r];
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::deltas_from_head(Val x, int n_ratio) {
  const TensorT<T>& xv = value(x);
  if (xv.ndim() != 4 || xv.dim(0) != 1 || xv.dim(1) != n_ratio * 5)
    fail(Errc::bad_argument, "deltas_from_head: expected (1, ratios*5, h, w)");
  int h = xv.dim(2), w = xv.dim(3);
  TensorT<T> out({h * w * n_ratio, 4});
  for (int y = 0; y < h; ++y)
    for (int xc = 0; xc < w; ++xc)
      for (int r = 0; r < n_ratio; ++r)
        for (int c = 0; c < 4; ++c)
          out.at2(static_cast<int>((static_cast<int64_t>(y) * w + xc) * n_ratio + r), c) =
              xv.at4(0, r * 5 + 1 + c, y, xc);
  Val o = make_node(std::move(out), rg_of(x));
  if (node(o).rg)
    backops_.push_back([this, x, o, h, w, n_ratio] {
      const TensorT<T>& g = node(o).grad;
      TensorT<T>& gx = node(x).grad;
      for (int y = 0; y < h; ++y)
        for (int xc = 0; xc < w; ++xc)
          for (int r = 0; r < n_ratio; ++r)
            for (int c = 0; c < 4; ++c)
              gx.at4(0, r * 5 + 1 + c, y, xc) +=
                  g.at2(static_cast<int>((static_cast<int64_t>(y) * w + xc) * n_ratio + r), c);
    });
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::softmax_cross_entropy(Val logits, const TensorT<T>& target_rows) {
  const TensorT<T>& lv = value(logits);
  if (lv.ndim() != 2 || !lv.same_shape(target_rows))
    fail(Errc::bad_argument, "softmax_cross_entropy: logits and targets must both be (n,k)");
  int n = lv.dim(0), k = lv.dim(1);
  for (int i = 0; i < n; ++i) {
    T s = 0;
    for (int j = 0; j < k; ++j) {
      T t = target_rows.at2(i, j);
      if (t < T(0)) fail(Errc::bad_data, "softmax_cross_entropy: negative target entry");
      s += t;
    }
    if (std::abs(static_cast<double>(s) - 1.0) > 1e-6)
      fail(Errc::bad_data, "softmax_cross_entropy: target row does not sum to 1");
  }

  auto probs = std::make_shared<TensorT<T>>(lv.shape);
  T loss = 0;
  for (int i = 0; i < n; ++i) {
    T mx = lv.at2(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, lv.at2(i, j));
    T se = 0;
    for (int j = 0; j < k; ++j) se += std::exp(lv.at2(i, j) - mx);
    T lse = mx + std::log(se);
    for (int j = 0; j < k; ++j) {
      probs->at2(i, j) = std::exp(lv.at2(i, j) - lse);
      loss += target_rows.at2(i, j) * (lse - lv.at2(i, j));
    }
  }
  loss /= static_cast<T>(n);

  Val o = make_node(TensorT<T>::scalar(loss), rg_of(logits));
  if (node(o).rg) {
    auto targets = std::make_shared<TensorT<T>>(target_rows);
    backops_.push_back([this, logits, o, probs, targets, n, k] {
      T g = node(o).grad[0];
      TensorT<T>& gl = node(logits).grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
          gl.at2(i, j) += g * (probs->at2(i, j) - targets->at2(i, j)) / static_cast<T>(n);
    });
  }
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::mse(Val pred, const TensorT<T>& target) {
  const TensorT<T>& pv = value(pred);
  if (!pv.same_shape(target)) fail(Errc::bad_argument, "mse: shape mismatch");
  T loss = 0;
  for (int64_t i = 0; i < pv.numel(); ++i) {
    T d = pv[i] - target[i];
    loss += d * d;
  }
  loss /= static_cast<T>(pv.numel());
  Val o = make_node(TensorT<T>::scalar(loss), rg_of(pred));
  if (node(o).rg) {
    auto tgt = std::make_shared<TensorT<T>>(target);
    backops_.push_back([this, pred, o, tgt] {
      T g = node(o).grad[0];
      const TensorT<T>& pv = node(pred).value;
      TensorT<T>& gp = node(pred).grad;
      T inv = T(2) / static_cast<T>(pv.numel());
      for (int64_t i = 0; i < pv.numel(); ++i) gp[i] += g * inv * (pv[i] - (*tgt)[i]);
    });
  }
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::bce_with_logits_masked(Val logits, const TensorT<T>& labels,
                                                        const TensorT<T>& mask) {
  const TensorT<T>& lv = value(logits);
  if (!lv.same_shape(labels) || !lv.same_shape(mask))
    fail(Errc::bad_argument, "bce_with_logits_masked: shape mismatch");
  T count = 0;
  for (int64_t i = 0; i < mask.numel(); ++i) {
    T m = mask[i];
    if (m != T(0) && m != T(1)) fail(Errc::bad_data, "bce_with_logits_masked: mask must be 0/1");
    count += m;
  }
  T denom = count > T(0) ? count : T(1);

  // Stable form: max(l,0) - l*y + log1p(exp(-|l|)).
  T loss = 0;
  for (int64_t i = 0; i < lv.numel(); ++i) {
    if (mask[i] == T(0)) continue;
    T l = lv[i];
    loss += std::max(l, T(0)) - l * labels[i] + std::log1p(std::exp(-std::abs(l)));
  }
  loss /= denom;

  Val o = make_node(TensorT<T>::scalar(loss), rg_of(logits));
  if (node(o).rg) {
    auto lab = std::make_shared<TensorT<T>>(labels);
    auto msk = std::make_shared<TensorT<T>>(mask);
    backops_.push_back([this, logits, o, lab, msk, denom] {
      T g = node(o).grad[0];
      const TensorT<T>& lv = node(logits).value;
      TensorT<T>& gl = node(logits).grad;
      for (int64_t i = 0; i < lv.numel(); ++i) {
        if ((*msk)[i] == T(0)) continue;
        T l = lv[i];
        T s = l >= T(0) ? T(1) / (T(1) + std::exp(-l)) : std::exp(l) / (T(1) + std::exp(l));
        gl[i] += g * (s - (*lab)[i]) / denom;
      }
    });
  }
  return o;
}

template <class T>
typename TapeT<T>::Val TapeT<T>::smooth_l1_masked(Val pred, const TensorT<T>& targets,
                                                  const TensorT<T>& mask) {
  const TensorT<T>& pv = value(pred);
  if (pv.ndim() != 2 || !pv.same_shape(targets))
    fail(Errc::bad_argument, "smooth_l1_masked: pred/targets must be (n,c)");
  if (mask.ndim() != 1 || mask.dim(0) != pv.dim(0))
    fail(Errc::bad_argument, "smooth_l1_masked: mask must be (n)");
  int n = pv.dim(0), c = pv.dim(1);
  T count = 0;
  for (int i = 0; i < n; ++i) {
    T m = mask[i];
    if (m != T(0) && m != T(1)) fail(Errc::bad_data, "smooth_l1_masked: mask must be 0/1");
    count += m;
  }
  T denom = count > T(0) ? count : T(1);

  T loss = 0;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == T(0)) continue;
    for (int j = 0; j < c; ++j) {
      T u = pv.at2(i, j) - targets.at2(i, j);
      T a = std::abs(u);
      loss += a < T(1) ? T(0.5) * u * u : a - T(0.5);
    }
  }
  loss /= denom;

  Val o = make_node(TensorT<T>::scalar(loss), rg_of(pred));
  if (node(o).rg) {
    auto tgt = std::make_shared<TensorT<T>>(targets);
    auto msk = std::make_shared<TensorT<T>>(mask);
    backops_.push_back([this, pred, o, tgt, msk, n, c, denom] {
      T g = node(o).grad[0];
      const TensorT<T>& pv = node(pred).value;
      TensorT<T>& gp = node(pred).grad;
      for (int i = 0; i < n; ++i) {
        if ((*msk)[i] == T(0)) continue;
        for (int j = 0; j < c; ++j) {
          T u = pv.at2(i, j) - tgt->at2(i, j);
          T d = u < T(-1) ? T(-1) : (u > T(1) ? T(1) : u);
          gp.at2(i, j) += g * d / denom;
        }
      }
    });
  }
  return o;
}

template <class T>
void TapeT<T>::backward(Val loss) {
  if (!grad_enabled_) fail(Errc::bad_argument, "backward on a tape built without gradients");
  if (backward_done_)
    fail(Errc::bad_argument, "backward called a second time without re-running forward");
  Node& ln = node(loss);
  if (ln.value.numel() != 1) fail(Errc::bad_argument, "backward target must be a scalar");
  if (!ln.rg) fail(Errc::bad_argument, "backward target does not depend on any parameter");
  backward_done_ = true;

  ln.grad[0] = T(1);
  for (auto it = backops_.rbegin(); it != backops_.rend(); ++it) (*it)();

  for (const auto& [p, id] : bound_) {
    const TensorT<T>& g = nodes_[static_cast<size_t>(id)].grad;
    for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
  }
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;
template class TapeT<float>;
template class TapeT<double>;

}  // namespace mvdet
