// SPDX-License-Identifier: Apache-2.0
#include "mvdet/sgd.hpp"

#include <cmath>

#include "mvdet/error.hpp"

namespace mvdet {

void check_sgd_config(const SgdConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) fail(Errc::bad_argument, "learning rate must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    fail(Errc::bad_argument, "momentum must be in [0,1)");
  if (!(cfg.decay_factor > 0.0)) fail(Errc::bad_argument, "decay factor must be positive");
}

double learning_rate_at(const SgdConfig& cfg, int epoch) {
  check_sgd_config(cfg);
  int hits = 0;
  for (int e : cfg.decay_epochs)
    if (epoch >= e) hits++;
  return cfg.learning_rate * std::pow(cfg.decay_factor, hits);
}

template <class T>
void sgd_step(ParamStoreT<T>& params, const SgdConfig& cfg, int epoch) {
  T lr = static_cast<T>(learning_rate_at(cfg, epoch));
  T m = static_cast<T>(cfg.momentum);
  for (auto& p : params.items()) {
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      p->velocity[i] = m * p->velocity[i] + p->grad[i];
      p->value[i] -= lr * p->velocity[i];
    }
  }
}

template void sgd_step<float>(ParamStoreT<float>&, const SgdConfig&, int);
template void sgd_step<double>(ParamStoreT<double>&, const SgdConfig&, int);

}  // namespace mvdet
