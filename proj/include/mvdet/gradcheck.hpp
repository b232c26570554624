// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "mvdet/rng.hpp"
#include "mvdet/tape.hpp"

namespace mvdet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_param;
  int64_t worst_coord = -1;
};

// Central-difference check of reverse-mode gradients, double precision only.
//
// loss_fn(true) must rebuild the computation from the current parameter
// values, run backward, and leave gradients in the store; loss_fn(false) must
// return the loss value without touching gradients. Per parameter, up to
// coords_per_param coordinates are sampled without replacement (all of them if
// the parameter is smaller). Relative error is
//   |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradCheckResult gradient_check(const std::function<double(bool with_grad)>& loss_fn,
                               ParamStoreT<double>& params, Rng& rng, double eps = 1e-5,
                               int coords_per_param = 100);

}  // namespace mvdet
