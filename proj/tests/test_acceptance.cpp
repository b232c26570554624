// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness: nine numbered release criteria, one pass/fail line
// each. Exits nonzero if any criterion fails. Tolerances are pinned here on
// purpose; loosening them is a release decision, not a test fix.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mvdet/checkpoint.hpp"
#include "mvdet/dataset.hpp"
#include "mvdet/froc.hpp"
#include "mvdet/gradcheck.hpp"
#include "mvdet/kernels.hpp"
#include "mvdet/kmeans.hpp"
#include "mvdet/model.hpp"
#include "mvdet/phantom.hpp"
#include "mvdet/rng.hpp"
#include "mvdet/trainer.hpp"
#include "mvdet/windowing.hpp"
#include "oracles.hpp"
#include "reference_kernels.hpp"

using namespace mvdet;

namespace {

struct Fail {
  std::string msg;
};

void expect(bool ok, const std::string& msg) {
  if (!ok) throw Fail{msg};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Tensor rand_t(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central differences

double check_graph(ParamStore& ps, const std::function<Tape::Val(Tape&)>& graph, uint64_t seed,
                   double eps = 1e-5, int coords = 60) {
  auto loss_fn = [&](bool with_grad) {
    Tape tape(with_grad);
    Tape::Val loss = graph(tape);
    if (with_grad) {
      ps.zero_grads();
      tape.backward(loss);
    }
    return tape.value(loss)[0];
  };
  Rng rng(seed);
  GradCheckResult r = gradient_check(loss_fn, ps, rng, eps, coords);
  return r.max_rel_err;
}

void criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  auto track = [&](const char* op, double err) {
    worst = std::max(worst, err);
    expect(err < 1e-4, std::string(op) + " gradient error " + fmt(err));
  };
  Rng init(101);

  {  // convolution, strided and padded
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {2, 3, 6, 7}));
    auto& w = ps.add("w", rand_t(init, {4, 3, 3, 3}));
    auto& b = ps.add("b", rand_t(init, {4}));
    Tensor tgt = rand_t(init, {2, 4, 3, 4});
    track("conv2d", check_graph(ps, [&](Tape& t) {
      return t.mse(t.conv2d(t.param(x), t.param(w), t.param(b), 2, 1), tgt);
    }, 1));
  }
  {  // fully connected
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {3, 5}));
    auto& w = ps.add("w", rand_t(init, {4, 5}));
    auto& b = ps.add("b", rand_t(init, {4}));
    Tensor tgt = rand_t(init, {3, 4});
    track("fully_connected", check_graph(ps, [&](Tape& t) {
      return t.mse(t.fully_connected(t.param(x), t.param(w), t.param(b)), tgt);
    }, 2));
  }
  {  // relu, inputs pushed off the kink
    ParamStore ps;
    Tensor xv({3, 4});
    for (int64_t i = 0; i < xv.numel(); ++i) {
      double m = init.uniform(0.1, 1.0);
      xv[i] = init.bernoulli(0.5) ? m : -m;
    }
    auto& x = ps.add("x", xv);
    Tensor tgt = rand_t(init, {3, 4});
    track("relu", check_graph(ps, [&](Tape& t) { return t.mse(t.relu(t.param(x)), tgt); }, 3));
  }
  {  // sigmoid
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {3, 4}, -2.0, 2.0));
    Tensor tgt = rand_t(init, {3, 4});
    track("sigmoid", check_graph(ps, [&](Tape& t) { return t.mse(t.sigmoid(t.param(x)), tgt); }, 4));
  }
  {  // max pooling
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {1, 2, 6, 6}));
    Tensor tgt = rand_t(init, {1, 2, 3, 3});
    track("max_pool2d", check_graph(ps, [&](Tape& t) {
      return t.mse(t.max_pool2d(t.param(x), 2, 2), tgt);
    }, 5));
  }
  {  // global pools
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {2, 3, 4, 5}));
    Tensor tgt = rand_t(init, {2, 3});
    track("global_avg_pool", check_graph(ps, [&](Tape& t) {
      return t.mse(t.global_avg_pool(t.param(x)), tgt);
    }, 6));
    track("global_max_pool", check_graph(ps, [&](Tape& t) {
      return t.mse(t.global_max_pool(t.param(x)), tgt);
    }, 7));
  }
  {  // nearest upsampling
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {1, 2, 3, 4}));
    Tensor tgt = rand_t(init, {1, 2, 6, 8});
    track("upsample_nearest", check_graph(ps, [&](Tape& t) {
      return t.mse(t.upsample_nearest(t.param(x), 2), tgt);
    }, 8));
  }
  {  // channel concat
    ParamStore ps;
    auto& a = ps.add("a", rand_t(init, {1, 2, 3, 3}));
    auto& b = ps.add("b", rand_t(init, {1, 3, 3, 3}));
    Tensor tgt = rand_t(init, {1, 5, 3, 3});
    track("concat", check_graph(ps, [&](Tape& t) {
      return t.mse(t.concat({t.param(a), t.param(b)}, 1), tgt);
    }, 9));
  }
  {  // channel reweighting
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {1, 3, 4, 4}));
    auto& s = ps.add("s", rand_t(init, {1, 3}, 0.1, 0.9));
    Tensor tgt = rand_t(init, {1, 3, 4, 4});
    track("mul_channel", check_graph(ps, [&](Tape& t) {
      return t.mse(t.mul_channel(t.param(x), t.param(s)), tgt);
    }, 10));
  }
  {  // add / scale / sum
    ParamStore ps;
    auto& a = ps.add("a", rand_t(init, {2, 3}));
    auto& b = ps.add("b", rand_t(init, {2, 3}));
    track("add_scale_sum", check_graph(ps, [&](Tape& t) {
      return t.sum(t.add(t.scale(t.param(a), -1.7), t.param(b)));
    }, 11));
  }
  {  // detection head unpacking
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {1, 10, 4, 4}));
    Tensor ts = rand_t(init, {32});
    Tensor td = rand_t(init, {32, 4});
    track("scores_from_head", check_graph(ps, [&](Tape& t) {
      return t.mse(t.scores_from_head(t.param(x), 2), ts);
    }, 12));
    track("deltas_from_head", check_graph(ps, [&](Tape& t) {
      return t.mse(t.deltas_from_head(t.param(x), 2), td);
    }, 13));
  }
  {  // softmax cross-entropy
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {4, 3}, -2.0, 2.0));
    Tensor tgt({4, 3});
    for (int r = 0; r < 4; ++r) {
      double s = 0;
      for (int c = 0; c < 3; ++c) {
        tgt.at2(r, c) = init.uniform(0.05, 1.0);
        s += tgt.at2(r, c);
      }
      for (int c = 0; c < 3; ++c) tgt.at2(r, c) /= s;
    }
    track("softmax_cross_entropy", check_graph(ps, [&](Tape& t) {
      return t.softmax_cross_entropy(t.param(x), tgt);
    }, 14));
  }
  {  // mean squared error
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {3, 4}));
    Tensor tgt = rand_t(init, {3, 4});
    track("mse", check_graph(ps, [&](Tape& t) { return t.mse(t.param(x), tgt); }, 15));
  }
  {  // masked binary cross-entropy
    ParamStore ps;
    auto& x = ps.add("x", rand_t(init, {12}, -2.0, 2.0));
    Tensor labels({12}), mask({12});
    for (int i = 0; i < 12; ++i) {
      labels[i] = init.bernoulli(0.5) ? 1.0 : 0.0;
      mask[i] = i < 8 ? 1.0 : 0.0;
    }
    track("bce_with_logits_masked", check_graph(ps, [&](Tape& t) {
      return t.bce_with_logits_masked(t.param(x), labels, mask);
    }, 16));
  }
  {  // masked smooth L1, residuals clear of the |u| = 1 kink
    ParamStore ps;
    Tensor targets = rand_t(init, {5, 4});
    Tensor pred({5, 4});
    for (int64_t i = 0; i < pred.numel(); ++i)
      pred[i] = targets[i] + (init.bernoulli(0.5) ? 0.4 : -0.4);
    auto& x = ps.add("x", pred);
    Tensor mask({5});
    for (int i = 0; i < 5; ++i) mask[i] = i == 2 ? 0.0 : 1.0;
    track("smooth_l1_masked", check_graph(ps, [&](Tape& t) {
      return t.smooth_l1_masked(t.param(x), targets, mask);
    }, 17));
  }

  // end to end: whole detector loss, both fusion modes and the position head
  {
    ModelConfig cfg;
    cfg.n_ctx = 3;
    cfg.n_views = 2;
    cfg.backbone.channels = {3, 4};
    cfg.backbone.pyramid_channels = 6;
    cfg.backbone.pyramid_levels = 1;
    cfg.fusion = FusionMode::channel_attention;
    cfg.attention_reduction = 4;
    cfg.position_head = true;
    cfg.head_hidden = 4;
    cfg.anchors.scales = {8};
    cfg.anchors.aspect_ratios = {1.0, 2.0};
    Detector model(cfg, 23);

    Rng rng(24);
    SampleT<double> s;
    for (int v = 0; v < 2; ++v) s.views.push_back(rand_t(rng, {1, 3, 8, 8}, 0.0, 1.0));
    s.gt_boxes = {{1.5, 2.0, 6.5, 7.0}};
    s.label = {1, 0.5};

    auto loss_fn = [&](bool with_grad) {
      Tape tape(with_grad);
      auto losses = model.loss(tape, s, {1.0, 1.0});
      if (with_grad) {
        model.params().zero_grads();
        tape.backward(losses.total);
      }
      return tape.value(losses.total)[0];
    };
    Rng pick(25);
    GradCheckResult r = gradient_check(loss_fn, model.params(), pick, 1e-6, 25);
    expect(r.max_rel_err < 1e-3, "end-to-end gradient error " + fmt(r.max_rel_err));
    worst = std::max(worst, r.max_rel_err);
  }

  double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  expect(sec < 120.0, "gradient suite took " + fmt(sec) + " s");
}

// ---------------------------------------------------------------------------
// criterion 2: parallel kernels vs naive serial oracles, exact postprocessing

void compare_buffers(const char* what, const std::vector<double>& a, const std::vector<double>& b,
                     double tol) {
  expect(a.size() == b.size(), std::string(what) + ": size mismatch");
  for (size_t i = 0; i < a.size(); ++i)
    expect(rel_err(a[i], b[i]) < tol, std::string(what) + " diverges at " + std::to_string(i) +
                                          ": " + fmt(a[i]) + " vs " + fmt(b[i]));
}

void criterion_oracles() {
  Rng rng(201);
  auto vec = [&](int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  };

  for (int trial = 0; trial < 50; ++trial) {  // convolution, forward + backward
    int n = 1 + static_cast<int>(rng.uniform_int(0, 1));
    int ci = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int co = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int k = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    int stride = 1 + static_cast<int>(rng.uniform_int(0, 1));
    int pad = static_cast<int>(rng.uniform_int(0, 2));
    int h = k + static_cast<int>(rng.uniform_int(0, 8));
    int w = k + static_cast<int>(rng.uniform_int(0, 8));
    auto d = kernels::make_conv_dims(n, ci, h, w, co, k, k, stride, pad);

    auto x = vec(int64_t(n) * ci * h * w);
    auto wt = vec(int64_t(co) * ci * k * k);
    auto bias = vec(co);
    int64_t ylen = int64_t(n) * co * d.ho * d.wo;
    std::vector<double> y1(static_cast<size_t>(ylen)), y2 = y1;
    kernels::conv2d_forward(x.data(), wt.data(), bias.data(), d, y1.data());
    ref::conv2d_forward(x.data(), wt.data(), bias.data(), d, y2.data());
    compare_buffers("conv2d_forward", y1, y2, 1e-10);

    auto gy = vec(ylen);
    std::vector<double> gx1(x.size(), 0), gw1(wt.size(), 0), gb1(bias.size(), 0);
    auto gx2 = gx1;
    auto gw2 = gw1;
    auto gb2 = gb1;
    kernels::conv2d_backward(x.data(), wt.data(), d, gy.data(), gx1.data(), gw1.data(), gb1.data());
    ref::conv2d_backward(x.data(), wt.data(), d, gy.data(), gx2.data(), gw2.data(), gb2.data());
    compare_buffers("conv2d_backward gx", gx1, gx2, 1e-10);
    compare_buffers("conv2d_backward gw", gw1, gw2, 1e-10);
    compare_buffers("conv2d_backward gb", gb1, gb2, 1e-10);
  }

  for (int trial = 0; trial < 50; ++trial) {  // fully connected
    int n = 1 + static_cast<int>(rng.uniform_int(0, 4));
    int dim = 1 + static_cast<int>(rng.uniform_int(0, 29));
    int k = 1 + static_cast<int>(rng.uniform_int(0, 19));
    auto x = vec(int64_t(n) * dim);
    auto w = vec(int64_t(k) * dim);
    auto b = vec(k);
    std::vector<double> y1(static_cast<size_t>(int64_t(n) * k)), y2 = y1;
    kernels::fc_forward(x.data(), w.data(), b.data(), n, dim, k, y1.data());
    ref::fc_forward(x.data(), w.data(), b.data(), n, dim, k, y2.data());
    compare_buffers("fc_forward", y1, y2, 1e-10);

    auto gy = vec(int64_t(n) * k);
    std::vector<double> gx1(x.size(), 0), gw1(w.size(), 0), gb1(b.size(), 0);
    auto gx2 = gx1;
    auto gw2 = gw1;
    auto gb2 = gb1;
    kernels::fc_backward(x.data(), w.data(), n, dim, k, gy.data(), gx1.data(), gw1.data(),
                         gb1.data());
    ref::fc_backward(x.data(), w.data(), n, dim, k, gy.data(), gx2.data(), gw2.data(), gb2.data());
    compare_buffers("fc_backward gx", gx1, gx2, 1e-10);
    compare_buffers("fc_backward gw", gw1, gw2, 1e-10);
    compare_buffers("fc_backward gb", gb1, gb2, 1e-10);
  }

  for (int trial = 0; trial < 50; ++trial) {  // pooling
    int n = 1 + static_cast<int>(rng.uniform_int(0, 1));
    int c = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int k = 2 + static_cast<int>(rng.uniform_int(0, 1));
    int stride = 1 + static_cast<int>(rng.uniform_int(0, 1));
    int h = k + static_cast<int>(rng.uniform_int(0, 7));
    int w = k + static_cast<int>(rng.uniform_int(0, 7));
    int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
    auto x = vec(int64_t(n) * c * h * w);
    int64_t ylen = int64_t(n) * c * ho * wo;
    std::vector<double> y1(static_cast<size_t>(ylen)), y2 = y1;
    std::vector<int> a1(static_cast<size_t>(ylen)), a2 = a1;
    kernels::maxpool_forward(x.data(), n, c, h, w, k, stride, y1.data(), ho, wo, a1.data());
    ref::maxpool_forward(x.data(), n, c, h, w, k, stride, y2.data(), ho, wo, a2.data());
    compare_buffers("maxpool_forward", y1, y2, 1e-10);
    expect(a1 == a2, "maxpool argmax disagrees");

    auto gy = vec(ylen);
    std::vector<double> gx1(x.size(), 0), gx2(x.size(), 0);
    kernels::maxpool_backward(a1.data(), n, c, h, w, ho, wo, gy.data(), gx1.data());
    ref::maxpool_backward(a2.data(), n, c, h, w, ho, wo, gy.data(), gx2.data());
    compare_buffers("maxpool_backward", gx1, gx2, 1e-10);

    std::vector<double> p1(static_cast<size_t>(n) * c), p2 = p1;
    kernels::global_avgpool_forward(x.data(), n, c, h * w, p1.data());
    ref::global_avgpool_forward(x.data(), n, c, h * w, p2.data());
    compare_buffers("global_avgpool", p1, p2, 1e-10);
    std::vector<int> m1(static_cast<size_t>(n) * c), m2 = m1;
    kernels::global_maxpool_forward(x.data(), n, c, h * w, p1.data(), m1.data());
    ref::global_maxpool_forward(x.data(), n, c, h * w, p2.data(), m2.data());
    compare_buffers("global_maxpool", p1, p2, 1e-10);
    expect(m1 == m2, "global maxpool argmax disagrees");
  }

  for (int trial = 0; trial < 50; ++trial) {  // nms vs brute force
    int n = static_cast<int>(rng.uniform_int(0, 40));
    auto dets = oracle::random_detections(rng, n, 25.0);
    double thr = rng.uniform(0.1, 0.7);
    auto got = nms(dets, thr);
    auto want = oracle::nms(dets, thr);
    expect(got.size() == want.size(), "nms kept count differs");
    for (size_t i = 0; i < got.size(); ++i)
      expect(got[i].score == want[i].score && got[i].box.x1 == want[i].box.x1 &&
                 got[i].box.y1 == want[i].box.y1 && got[i].box.x2 == want[i].box.x2 &&
                 got[i].box.y2 == want[i].box.y2,
             "nms survivor " + std::to_string(i) + " differs");
  }

  for (int trial = 0; trial < 200; ++trial) {  // matching vs exhaustive greedy
    EvalCase c;
    int ng = static_cast<int>(rng.uniform_int(0, 5));
    for (int g = 0; g < ng; ++g) c.gt_boxes.push_back(oracle::random_box(rng, 30.0));
    c.detections = oracle::random_detections(rng, static_cast<int>(rng.uniform_int(0, 12)), 30.0);
    double thr = rng.uniform(0.3, 0.7);
    expect(match_detections(c, thr) == oracle::match(c, thr), "matching flags differ");
  }

  for (int trial = 0; trial < 100; ++trial) {  // froc vs threshold sweep
    std::vector<EvalCase> cases;
    int n_images = 1 + static_cast<int>(rng.uniform_int(0, 5));
    int total_gt = 0;
    for (int i = 0; i < n_images; ++i) {
      EvalCase c;
      c.image_id = "img" + std::to_string(i);
      int ng = static_cast<int>(rng.uniform_int(0, 4));
      total_gt += ng;
      for (int g = 0; g < ng; ++g) c.gt_boxes.push_back(oracle::random_box(rng, 30.0));
      c.detections = oracle::random_detections(rng, static_cast<int>(rng.uniform_int(0, 12)), 30.0);
      cases.push_back(std::move(c));
    }
    if (total_gt == 0) {
      cases[0].gt_boxes.push_back(oracle::random_box(rng, 30.0));
    }
    FrocCurve got = froc(cases, {0.5, 1, 2, 3, 4}, 0.5);
    auto want = oracle::froc_points(cases, 0.5);
    expect(got.points.size() == want.size(), "froc point count differs");
    for (size_t i = 0; i < want.size(); ++i)
      expect(got.points[i].threshold == want[i].threshold &&
                 got.points[i].fps_per_image == want[i].fps &&
                 got.points[i].sensitivity == want[i].sens,
             "froc point " + std::to_string(i) + " differs");
  }
}

// ---------------------------------------------------------------------------
// criterion 3: channel-attention gate fidelity

std::vector<double> gate_of(const Tensor& f, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                            const Tensor& b2) {
  Tape tape(false);
  auto out = fusion_gate<double>(tape, tape.constant(f), tape.constant(w1), tape.constant(b1),
                                 tape.constant(w2), tape.constant(b2));
  const Tensor& v = tape.value(out);
  std::vector<double> res(static_cast<size_t>(v.numel()));
  for (int64_t i = 0; i < v.numel(); ++i) res[static_cast<size_t>(i)] = v[i];
  return res;
}

void criterion_attention() {
  Rng rng(301);
  for (int trial = 0; trial < 50; ++trial) {  // scalar re-implementation, 1e-10
    int c = 4 + static_cast<int>(rng.uniform_int(0, 12));
    int hidden = 1 + static_cast<int>(rng.uniform_int(0, 5));
    int h = 1 + static_cast<int>(rng.uniform_int(0, 6));
    int w = 1 + static_cast<int>(rng.uniform_int(0, 6));
    Tensor f = rand_t(rng, {1, c, h, w}, -2.0, 2.0);
    Tensor w1 = rand_t(rng, {hidden, c});
    Tensor b1 = rand_t(rng, {hidden});
    Tensor w2 = rand_t(rng, {c, hidden});
    Tensor b2 = rand_t(rng, {c});
    auto got = gate_of(f, w1, b1, w2, b2);
    auto want = oracle::attention_weights(f, w1, b1, w2, b2);
    for (size_t i = 0; i < want.size(); ++i)
      expect(std::abs(got[i] - want[i]) /
                     std::max({std::abs(got[i]), std::abs(want[i]), 1e-300}) <
                 1e-10,
             "attention weight " + std::to_string(i) + " off the scalar oracle");
  }

  {  // zero parameters -> exactly 0.5
    Tensor f = rand_t(rng, {1, 6, 5, 4}, -3.0, 3.0);
    auto w = gate_of(f, Tensor({2, 6}), Tensor({2}), Tensor({6, 2}), Tensor({6}));
    for (double x : w) expect(x == 0.5, "zero-parameter gate weight is " + fmt(x));
  }

  for (int trial = 0; trial < 20; ++trial) {  // strict (0, 1), bounded logits
    Tensor f = rand_t(rng, {1, 8, 3, 3}, -2.0, 2.0);
    Tensor w1 = rand_t(rng, {2, 8}, -0.5, 0.5);
    Tensor b1 = rand_t(rng, {2}, -0.5, 0.5);
    Tensor w2 = rand_t(rng, {8, 2}, -0.5, 0.5);
    Tensor b2 = rand_t(rng, {8}, -0.5, 0.5);
    for (double x : gate_of(f, w1, b1, w2, b2))
      expect(x > 0.0 && x < 1.0, "gate weight " + fmt(x) + " touches the boundary");
  }

  {  // spatial-permutation invariance, exact on dyadic-rational inputs
    int c = 5, h = 6, w = 8;
    Tensor f({1, c, h, w});
    for (int64_t i = 0; i < f.numel(); ++i)
      f[i] = static_cast<double>(rng.uniform_int(-128, 128)) / 64.0;
    Tensor w1 = rand_t(rng, {3, c});
    Tensor b1 = rand_t(rng, {3});
    Tensor w2 = rand_t(rng, {c, 3});
    Tensor b2 = rand_t(rng, {c});
    auto base = gate_of(f, w1, b1, w2, b2);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<int> perm(static_cast<size_t>(h * w));
      for (int p = 0; p < h * w; ++p) perm[static_cast<size_t>(p)] = p;
      rng.shuffle(perm);
      Tensor g({1, c, h, w});
      for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < h * w; ++p) {
          int q = perm[static_cast<size_t>(p)];
          g.at4(0, ch, p / w, p % w) = f.at4(0, ch, q / w, q % w);
        }
      auto got = gate_of(g, w1, b1, w2, b2);
      for (size_t i = 0; i < base.size(); ++i)
        expect(got[i] == base[i], "permutation changed weight " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// criterion 4: position loss fidelity

double pos_loss_of(const std::array<double, 3>& lg, int cls, double value, double p) {
  Tensor logits({1, 3});
  for (int i = 0; i < 3; ++i) logits[i] = lg[static_cast<size_t>(i)];
  Tensor val({1, 1});
  val[0] = value;
  Tape tape(false);
  auto l = position_loss<double>(tape, tape.constant(logits), tape.constant(val), {cls, p});
  return tape.value(l)[0];
}

void criterion_position_loss() {
  Rng rng(401);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<double, 3> lg{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                             rng.uniform(-5.0, 5.0)};
    int cls = static_cast<int>(rng.uniform_int(0, 2));
    double value = rng.uniform(-0.5, 1.5);
    double p = rng.uniform(0.0, 1.0);
    double got = pos_loss_of(lg, cls, value, p);
    double want = oracle::position_loss(lg, cls, value, p);
    expect(std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-300}) < 1e-10,
           "position loss off the scalar oracle: " + fmt(got) + " vs " + fmt(want));
  }

  double perfect = pos_loss_of({0.0, -80.0, -80.0}, 0, 0.375, 0.375);
  expect(perfect >= 0.0 && perfect < 1e-10, "perfect prediction costs " + fmt(perfect));

  for (int cls = 0; cls < 3; ++cls) {
    double uniform = pos_loss_of({0.7, 0.7, 0.7}, cls, 0.25, 0.25);
    expect(std::abs(uniform - std::log(3.0)) < 1e-9,
           "uniform prediction costs " + fmt(uniform) + ", expected ln 3");
  }
}

// ---------------------------------------------------------------------------
// criterion 5: window clustering recovery

void criterion_clustering() {
  auto t0 = std::chrono::steady_clock::now();
  const double tx[3] = {-505, 50, 446};   // sorted by level
  const double ty[3] = {1980, 449, 1960};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    std::vector<WindowSample> samples;
    for (int blob = 0; blob < 3; ++blob)
      for (int i = 0; i < 40; ++i)
        samples.push_back({tx[blob] + 4.0 * rng.normal(), ty[blob] + 4.0 * rng.normal()});
    rng.shuffle(samples);

    KMeansResult r = cluster_windows(samples, 3, seed);
    std::vector<WindowSpec> c = r.centroids;
    std::sort(c.begin(), c.end(), [](const WindowSpec& a, const WindowSpec& b) {
      return a.level < b.level;
    });
    for (int i = 0; i < 3; ++i) {
      double d = std::hypot(c[static_cast<size_t>(i)].level - tx[i],
                            c[static_cast<size_t>(i)].width - ty[i]);
      expect(d < 15.0, "seed " + std::to_string(seed) + ": centroid " + std::to_string(i) +
                           " is " + fmt(d) + " from its window");
    }
  }
  double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  expect(sec < 10.0, "clustering took " + fmt(sec) + " s");
}

// ---------------------------------------------------------------------------
// criterion 6: windowing exactness

void criterion_windowing() {
  Rng rng(601);
  int total = 0;
  while (total < 1000000) {
    int n = 1000;
    WindowSpec w{rng.uniform(-1200.0, 2200.0), rng.uniform(1.0, 4000.0)};
    Image2D img(1, n);
    for (int i = 0; i < n; ++i) img.v[static_cast<size_t>(i)] = rng.uniform(-3000.0, 4000.0);
    Image2D out = apply_window(img, w);
    for (int i = 0; i < n; ++i) {
      double want = oracle::window(img.v[static_cast<size_t>(i)], w.level, w.width);
      expect(std::abs(out.v[static_cast<size_t>(i)] - want) <= 1e-12,
             "window value off by " + fmt(std::abs(out.v[static_cast<size_t>(i)] - want)));
    }
    total += n;
  }

  // monotone on sorted sweeps
  ViewSet views = default_views();
  std::vector<WindowSpec> sweep = views.windows;
  sweep.push_back(kWideWindow);
  for (int t = 0; t < 20; ++t) sweep.push_back({rng.uniform(-1000.0, 2000.0), rng.uniform(1.0, 4000.0)});
  for (const WindowSpec& w : sweep) {
    double prev = -1.0;
    for (double hu = -3000.0; hu <= 4000.0; hu += 7.0) {
      double v = window_value(hu, w);
      expect(v >= prev, "window value decreased along a sorted sweep");
      prev = v;
    }
  }
}

// ---------------------------------------------------------------------------
// criterion 7: ablation trend on the fixed phantom corpus

struct AblationScores {
  double single = 0, multi = 0, attn = 0, full = 0;
};

double train_and_score(const RawDataset& raw_train, const RawDataset& raw_test, bool multi,
                       bool attention, bool position, uint64_t seed) {
  ModelConfig mc;
  mc.n_views = multi ? 3 : 1;
  mc.backbone.pyramid_channels = 16;
  mc.fusion = attention ? FusionMode::channel_attention : FusionMode::concat;
  mc.position_head = position;

  ViewSet views;
  if (multi)
    views = default_views();
  else
    views.windows.push_back(kWideWindow);

  DatasetT<float> train_set = make_samples<float>(raw_train, views, mc.n_ctx);
  DatasetT<float> test_set = make_samples<float>(raw_test, views, mc.n_ctx);

  TrainConfig tc;
  tc.sgd.learning_rate = 0.002;
  tc.sgd.momentum = 0.9;
  tc.sgd.decay_epochs = {10, 12};
  tc.sgd.decay_factor = 0.1;
  tc.weights.lambda_reg = 1.0;
  tc.weights.lambda_pos = 0.25;
  tc.epochs = 13;
  tc.flip_augment = true;
  tc.seed = seed;

  DetectorT<float> model(mc, seed);
  train(model, train_set, tc);
  std::vector<EvalCase> cases = predict_dataset(model, test_set);
  return froc(cases, {1.0}, 0.5).sensitivity_at_rates[0];
}

void criterion_ablation() {
  auto t0 = std::chrono::steady_clock::now();

  PhantomSpec train_spec;
  train_spec.n_volumes = 60;
  PhantomSpec test_spec;
  test_spec.n_volumes = 20;
  RawDataset raw_train = to_raw(generate_phantom(train_spec, 7));
  RawDataset raw_test = to_raw(generate_phantom(test_spec, 67));

  int passes = 0;
  std::string detail;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    AblationScores s;
    s.single = train_and_score(raw_train, raw_test, false, false, false, seed);
    s.multi = train_and_score(raw_train, raw_test, true, false, false, seed);
    s.attn = train_and_score(raw_train, raw_test, true, true, false, seed);
    s.full = train_and_score(raw_train, raw_test, true, true, true, seed);
    bool chain = s.full >= s.attn && s.attn >= s.multi && s.multi >= s.single;
    bool gap = (s.full - s.single) >= 0.10;
    if (chain && gap) passes++;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  seed %d: single %.4f multi %.4f attn %.4f full %.4f %s\n",
                  static_cast<int>(seed), s.single, s.multi, s.attn, s.full,
                  chain && gap ? "ok" : "violated");
    detail += line;
  }
  std::fputs(detail.c_str(), stdout);
  expect(passes >= 4, "trend held in only " + std::to_string(passes) + "/5 seeds");

  double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  expect(sec < 900.0, "ablation suite took " + fmt(sec) + " s");
}

// ---------------------------------------------------------------------------
// criterion 8: run-to-run determinism

struct RunArtifacts {
  std::string checkpoint_bytes;
  std::string metric_table;
};

RunArtifacts deterministic_run(const std::filesystem::path& dir, const std::string& tag) {
  PhantomSpec spec;
  spec.n_volumes = 4;
  RawDataset raw = to_raw(generate_phantom(spec, 31));
  ViewSet views = default_views();

  ModelConfig mc;
  mc.backbone.pyramid_channels = 8;
  DatasetT<float> data = make_samples<float>(raw, views, mc.n_ctx);

  TrainConfig tc;
  tc.sgd.learning_rate = 0.002;
  tc.epochs = 3;
  tc.seed = 9;
  DetectorT<float> model(mc, 9);
  train(model, data, tc);

  Checkpoint ckpt;
  ckpt.config_text = "determinism probe\n";
  ckpt.entries = pack_params(model.params());
  std::filesystem::path path = dir / (tag + ".ckpt");
  save_checkpoint(path.string(), ckpt);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();

  FrocCurve curve = froc(predict_dataset(model, data), {0.5, 1, 2, 3, 4}, 0.5);
  return {buf.str(), froc_report({{"probe", curve}})};
}

void criterion_determinism() {
  auto dir = std::filesystem::temp_directory_path() / "mvdet_acceptance";
  std::filesystem::create_directories(dir);
  for (int round = 0; round < 2; ++round) {
    RunArtifacts a = deterministic_run(dir, "run_a" + std::to_string(round));
    RunArtifacts b = deterministic_run(dir, "run_b" + std::to_string(round));
    expect(!a.checkpoint_bytes.empty(), "empty checkpoint file");
    expect(a.checkpoint_bytes == b.checkpoint_bytes,
           "round " + std::to_string(round) + ": checkpoints are not byte-identical");
    expect(a.metric_table == b.metric_table,
           "round " + std::to_string(round) + ": metric tables differ");
  }
}

// ---------------------------------------------------------------------------
// criterion 9: report rendering

void criterion_report() {
  FrocCurve c;
  c.report_rates = {0.5, 1, 2, 3, 4};
  c.sensitivity_at_rates = {0.7383, 0.8182, 0.8760, 0.8957, 0.9130};
  std::string table = froc_report({{"ours", c}});
  const char* cells[5] = {"73.83", "81.82", "87.60", "89.57", "91.30"};
  size_t at = 0;
  for (const char* cell : cells) {
    size_t pos = table.find(cell, at);
    expect(pos != std::string::npos, std::string("cell ") + cell + " missing from the report");
    at = pos + 1;
  }
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* what;
  void (*run)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "gradient suite (per-op < 1e-4, end-to-end < 1e-3, < 2 min)", criterion_gradients},
      {2, "oracle equivalence (kernels < 1e-10; nms/match/froc exact)", criterion_oracles},
      {3, "attention gate fidelity (scalar oracle, 0.5 at zero, (0,1), permutation)",
       criterion_attention},
      {4, "position loss fidelity (scalar oracle, zero at perfect, ln 3 uniform)",
       criterion_position_loss},
      {5, "window clustering recovery (20/20 seeds within L2 15, < 10 s)", criterion_clustering},
      {6, "windowing exactness (1e6 pairs within 1e-12, monotone sweeps)", criterion_windowing},
      {7, "ablation trend (full >= attn >= multi >= single, gap >= 10 pts, 4/5 seeds, < 15 min)",
       criterion_ablation},
      {8, "determinism (byte-identical checkpoints and metric tables, twice)",
       criterion_determinism},
      {9, "report fidelity (published sensitivities verbatim to two decimals)", criterion_report},
  };

  bool all_ok = true;
  for (const Criterion& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      c.run();
      double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("[criterion-%d] %s PASS (%.1fs)\n", c.id, c.what, sec);
    } catch (const Fail& f) {
      all_ok = false;
      std::printf("[criterion-%d] %s FAIL: %s\n", c.id, c.what, f.msg.c_str());
    } catch (const std::exception& e) {
      all_ok = false;
      std::printf("[criterion-%d] %s FAIL (exception): %s\n", c.id, c.what, e.what());
    }
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
