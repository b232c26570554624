// SPDX-License-Identifier: Apache-2.0
#include "mvdet/trainer.hpp"

#include <cmath>
#include <numeric>

#include "mvdet/rng.hpp"

namespace mvdet {

void check_train_config(const TrainConfig& cfg) {
  check_sgd_config(cfg.sgd);
  check_loss_weights(cfg.weights);
  if (cfg.epochs < 1) fail(Errc::bad_argument, "epochs must be >= 1");
}

template <class T>
SampleT<T> flip_sample(const SampleT<T>& s) {
  SampleT<T> out;
  out.label = s.label;
  for (const TensorT<T>& v : s.views) {
    TensorT<T> f(v.shape);
    int ch = v.dim(0) * v.dim(1), rows = v.dim(2), cols = v.dim(3);
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < rows; ++y) {
        int64_t base = (static_cast<int64_t>(c) * rows + y) * cols;
        for (int x = 0; x < cols; ++x) f[base + x] = v[base + (cols - 1 - x)];
      }
    out.views.push_back(std::move(f));
  }
  double w = s.views.empty() ? 0.0 : s.views[0].dim(3);
  for (const Box& b : s.gt_boxes) out.gt_boxes.push_back(flip_horizontal(b, w));
  return out;
}

template <class T>
std::vector<EpochStats> train(DetectorT<T>& model, const DatasetT<T>& data,
                              const TrainConfig& cfg) {
  check_train_config(cfg);
  if (data.samples.empty()) fail(Errc::bad_data, "empty dataset");

  Rng rng(cfg.seed);
  std::vector<EpochStats> log;
  std::vector<int> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = learning_rate_at(cfg.sgd, epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (int idx : order) {
      const SampleT<T>& base = data.samples[static_cast<size_t>(idx)];
      bool flip = cfg.flip_augment && rng.bernoulli(0.5);
      try {
        TapeT<T> tape(true);
        auto losses = model.loss(tape, flip ? flip_sample(base) : base, cfg.weights);
        double lv = static_cast<double>(tape.value(losses.total)[0]);
        if (!std::isfinite(lv))
          fail(Errc::numeric_failure, "loss diverged (non-finite)");
        model.params().zero_grads();
        tape.backward(losses.total);
        sgd_step(model.params(), cfg.sgd, epoch);
        loss_sum += lv;
      } catch (const Error& e) {
        if (e.code() != Errc::numeric_failure) throw;
        fail(Errc::numeric_failure,
             "epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    log.push_back({epoch, lr, loss_sum / static_cast<double>(data.samples.size())});
  }
  return log;
}

template <class T>
std::vector<EvalCase> predict_dataset(DetectorT<T>& model, const DatasetT<T>& data) {
  if (data.samples.size() != data.ids.size())
    fail(Errc::bad_argument, "dataset ids out of step with samples");
  std::vector<EvalCase> cases;
  cases.reserve(data.samples.size());
  for (size_t i = 0; i < data.samples.size(); ++i) {
    EvalCase c;
    c.image_id = data.ids[i];
    c.gt_boxes = data.samples[i].gt_boxes;
    c.detections = model.predict(data.samples[i]);
    cases.push_back(std::move(c));
  }
  return cases;
}

template SampleT<float> flip_sample<float>(const SampleT<float>&);
template SampleT<double> flip_sample<double>(const SampleT<double>&);
template std::vector<EpochStats> train<float>(DetectorT<float>&, const DatasetT<float>&,
                                              const TrainConfig&);
template std::vector<EpochStats> train<double>(DetectorT<double>&, const DatasetT<double>&,
                                               const TrainConfig&);
template std::vector<EvalCase> predict_dataset<float>(DetectorT<float>&, const DatasetT<float>&);
template std::vector<EvalCase> predict_dataset<double>(DetectorT<double>&,
                                                       const DatasetT<double>&);

}  // namespace mvdet
