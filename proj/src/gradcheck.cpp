// SPDX-License-Identifier: Apache-2.0
#include "mvdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mvdet {

GradCheckResult gradient_check(const std::function<double(bool with_grad)>& loss_fn,
                               ParamStoreT<double>& params, Rng& rng, double eps,
                               int coords_per_param) {
  if (!(eps > 0.0)) fail(Errc::bad_argument, "eps must be positive");
  if (coords_per_param < 1) fail(Errc::bad_argument, "coords_per_param must be >= 1");

  params.zero_grads();
  loss_fn(true);

  std::vector<TensorT<double>> analytic;
  analytic.reserve(params.items().size());
  for (const auto& p : params.items()) analytic.push_back(p->grad);

  GradCheckResult res;
  for (size_t pi = 0; pi < params.items().size(); ++pi) {
    ParamT<double>& p = *params.items()[pi];
    int64_t n = p.value.numel();

    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    int64_t take = std::min<int64_t>(n, coords_per_param);
    for (int64_t i = 0; i < take; ++i) {
      int64_t j = rng.uniform_int(i, n - 1);
      std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
    }

    for (int64_t i = 0; i < take; ++i) {
      int64_t c = coords[static_cast<size_t>(i)];
      double orig = p.value[c];
      p.value[c] = orig + eps;
      double fp = loss_fn(false);
      p.value[c] = orig - eps;
      double fm = loss_fn(false);
      p.value[c] = orig;

      double g_fd = (fp - fm) / (2.0 * eps);
      double g_ad = analytic[pi][c];
      double rel = std::abs(g_ad - g_fd) / std::max({std::abs(g_ad), std::abs(g_fd), 1e-8});
      res.coords_checked++;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p.name;
        res.worst_coord = c;
      }
    }
  }
  return res;
}

}  // namespace mvdet
