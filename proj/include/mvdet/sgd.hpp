// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mvdet/tape.hpp"

namespace mvdet {

struct SgdConfig {
  double learning_rate = 0.002;
  double momentum = 0.9;
  std::vector<int> decay_epochs{10, 12};  // 0-indexed epochs at which lr drops
  double decay_factor = 0.1;
};

// learning_rate * decay_factor^(number of decay epochs already reached).
double learning_rate_at(const SgdConfig& cfg, int epoch);

// Momentum update per parameter: v <- m*v + g; p <- p - lr*v.
template <class T>
void sgd_step(ParamStoreT<T>& params, const SgdConfig& cfg, int epoch);

void check_sgd_config(const SgdConfig& cfg);

}  // namespace mvdet
