// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvdet/dataset.hpp"
#include "mvdet/froc.hpp"
#include "mvdet/model.hpp"
#include "mvdet/sgd.hpp"

namespace mvdet {

struct TrainConfig {
  SgdConfig sgd;
  LossWeights weights;
  int epochs = 13;
  bool flip_augment = true;  // horizontal flip, probability 0.5
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

void check_train_config(const TrainConfig& cfg);

// One-sample SGD over shuffled epochs. Deterministic under (model seed,
// cfg.seed): the trainer draws, in order, one shuffle per epoch, then one
// flip coin per visited sample (only when flip_augment is on). A non-finite
// loss aborts with the epoch index in the message.
template <class T>
std::vector<EpochStats> train(DetectorT<T>& model, const DatasetT<T>& data,
                              const TrainConfig& cfg);

// Horizontal mirror of a sample: every view is flipped along x and the boxes
// are flipped with it.
template <class T>
SampleT<T> flip_sample(const SampleT<T>& s);

// Inference over a dataset, one EvalCase per sample.
template <class T>
std::vector<EvalCase> predict_dataset(DetectorT<T>& model, const DatasetT<T>& data);

}  // namespace mvdet
