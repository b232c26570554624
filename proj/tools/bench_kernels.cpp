// SPDX-License-Identifier: Apache-2.0
// Timing harness: parallel kernels vs the serial reference, with an agreement
// check on every case. --quick shrinks the shapes for CI smoke use.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "mvdet/kernels.hpp"
#include "mvdet/rng.hpp"
#include "reference_kernels.hpp"

using namespace mvdet;
namespace K = mvdet::kernels;
namespace R = mvdet::ref;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-12});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

void fill(std::vector<double>& v, Rng& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

struct ConvCase {
  const char* name;
  int n, ci, h, w, co, k, stride, pad;
};

bool bench_conv(const ConvCase& c, int reps) {
  K::ConvDims d = K::make_conv_dims(c.n, c.ci, c.h, c.w, c.co, c.k, c.k, c.stride, c.pad);
  Rng rng(41);
  std::vector<double> x(static_cast<size_t>(c.n) * c.ci * c.h * c.w);
  std::vector<double> wgt(static_cast<size_t>(c.co) * c.ci * c.k * c.k);
  std::vector<double> b(static_cast<size_t>(c.co));
  fill(x, rng);
  fill(wgt, rng);
  fill(b, rng);
  size_t out_n = static_cast<size_t>(c.n) * c.co * d.ho * d.wo;
  std::vector<double> y_par(out_n), y_ref(out_n);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) K::conv2d_forward(x.data(), wgt.data(), b.data(), d, y_par.data());
  double par_ms = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) R::conv2d_forward(x.data(), wgt.data(), b.data(), d, y_ref.data());
  double ref_ms = ms_since(t0) / reps;

  double fwd_diff = max_rel_diff(y_par, y_ref);

  // Backward: same upstream gradient through both implementations.
  std::vector<double> gy(out_n);
  fill(gy, rng);
  std::vector<double> gx_p(x.size()), gw_p(wgt.size()), gb_p(b.size());
  std::vector<double> gx_r(x.size()), gw_r(wgt.size()), gb_r(b.size());

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    std::fill(gx_p.begin(), gx_p.end(), 0.0);
    std::fill(gw_p.begin(), gw_p.end(), 0.0);
    std::fill(gb_p.begin(), gb_p.end(), 0.0);
    K::conv2d_backward(x.data(), wgt.data(), d, gy.data(), gx_p.data(), gw_p.data(), gb_p.data());
  }
  double par_bwd_ms = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    std::fill(gx_r.begin(), gx_r.end(), 0.0);
    std::fill(gw_r.begin(), gw_r.end(), 0.0);
    std::fill(gb_r.begin(), gb_r.end(), 0.0);
    R::conv2d_backward(x.data(), wgt.data(), d, gy.data(), gx_r.data(), gw_r.data(), gb_r.data());
  }
  double ref_bwd_ms = ms_since(t0) / reps;

  double bwd_diff = std::max({max_rel_diff(gx_p, gx_r), max_rel_diff(gw_p, gw_r),
                              max_rel_diff(gb_p, gb_r)});

  double macs = static_cast<double>(out_n) * c.ci * c.k * c.k;
  double gflops = 2.0 * macs / (par_ms * 1e6);
  // The two implementations sum in different orders, so agreement is to
  // rounding, not bitwise.
  bool ok = fwd_diff < 1e-10 && bwd_diff < 1e-10;
  std::printf(
      "%-14s fwd %8.3f ms (ref %8.3f, %4.1fx)  bwd %8.3f ms (ref %8.3f)  %6.2f GF/s  diff %.1e/%.1e  %s\n",
      c.name, par_ms, ref_ms, ref_ms / par_ms, par_bwd_ms, ref_bwd_ms, gflops, fwd_diff, bwd_diff,
      ok ? "ok" : "MISMATCH");
  return ok;
}

bool bench_pool(int n, int c, int h, int w, int reps) {
  Rng rng(43);
  std::vector<double> x(static_cast<size_t>(n) * c * h * w);
  fill(x, rng);
  int ho = (h - 2) / 2 + 1, wo = (w - 2) / 2 + 1;
  size_t out_n = static_cast<size_t>(n) * c * ho * wo;
  std::vector<double> y_p(out_n), y_r(out_n);
  std::vector<int> am_p(out_n), am_r(out_n);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    K::maxpool_forward(x.data(), n, c, h, w, 2, 2, y_p.data(), ho, wo, am_p.data());
  double par_ms = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    R::maxpool_forward(x.data(), n, c, h, w, 2, 2, y_r.data(), ho, wo, am_r.data());
  double ref_ms = ms_since(t0) / reps;

  double diff = max_rel_diff(y_p, y_r);
  bool am_ok = std::memcmp(am_p.data(), am_r.data(), am_p.size() * sizeof(int)) == 0;
  bool ok = diff == 0.0 && am_ok;
  std::printf("%-14s fwd %8.3f ms (ref %8.3f, %4.1fx)  diff %.1e  argmax %s\n", "maxpool 2x2",
              par_ms, ref_ms, ref_ms / par_ms, diff, ok ? "ok" : "MISMATCH");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--quick") {
      quick = true;
    } else {
      std::fprintf(stderr, "usage: bench_kernels [--quick]\n");
      return 1;
    }
  }

  std::vector<ConvCase> cases;
  int reps;
  if (quick) {
    reps = 3;
    cases = {
        {"conv 3x3 s1", 1, 8, 32, 32, 8, 3, 1, 1},
        {"conv 3x3 s2", 1, 8, 32, 32, 16, 3, 2, 1},
        {"conv 1x1", 1, 16, 16, 16, 16, 1, 1, 0},
    };
  } else {
    reps = 10;
    cases = {
        {"conv 3x3 s1", 2, 16, 64, 64, 16, 3, 1, 1},
        {"conv 3x3 s2", 2, 16, 64, 64, 32, 3, 2, 1},
        {"conv 1x1", 2, 32, 32, 32, 32, 1, 1, 0},
        {"conv wide", 1, 3, 128, 128, 8, 3, 2, 1},
    };
  }

  bool ok = true;
  for (const ConvCase& c : cases) ok = bench_conv(c, reps) && ok;
  ok = bench_pool(quick ? 1 : 2, 16, quick ? 32 : 64, quick ? 32 : 64, reps) && ok;

  if (!ok) {
    std::fprintf(stderr, "kernel disagreement detected\n");
    return 3;
  }
  return 0;
}
