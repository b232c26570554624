// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mvdet/boxes.hpp"
#include "mvdet/phantom.hpp"
#include "mvdet/tape.hpp"

namespace mvdet {

// Per-view pathway: a small strided-conv backbone feeding a two-level feature
// pyramid (1x1 laterals, nearest x2 top-down, 3x3 smoothing).
struct BackboneConfig {
  std::vector<int> channels{8, 16, 32};  // conv3x3 stride-2 stages
  int pyramid_channels = 32;
  int pyramid_levels = 2;  // taken from the deepest stages
};

enum class FusionMode { concat, channel_attention };

struct ModelConfig {
  int n_ctx = 3;    // context slices per view
  int n_views = 3;  // rendered windows; 1 = the wide-window baseline
  BackboneConfig backbone;
  FusionMode fusion = FusionMode::channel_attention;
  int attention_reduction = 4;
  bool position_head = true;
  int head_hidden = 16;
  AnchorSet anchors;  // scales[l] pairs with pyramid level l
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  double score_thresh = 0.05;
  double nms_iou = 0.5;
};

struct LossWeights {
  double lambda_reg = 1.0;
  double lambda_pos = 1.0;
};

// One training/inference sample: n_views rendered stacks over the same slab.
template <class T>
struct SampleT {
  std::vector<TensorT<T>> views;  // each (1, n_ctx, H, W)
  std::vector<Box> gt_boxes;      // network pixel space
  PositionLabel label;
};

void check_model_config(const ModelConfig& cfg);
void check_loss_weights(const LossWeights& w);

// Channel gate of the attention fusion: sigmoid(fc2(relu(fc1(avg + max))))
// over a (1, c, h, w) feature map. Returns the per-channel weights (1, c).
template <class T>
typename TapeT<T>::Val fusion_gate(TapeT<T>& tape, typename TapeT<T>::Val fused,
                                   typename TapeT<T>::Val fc1w, typename TapeT<T>::Val fc1b,
                                   typename TapeT<T>::Val fc2w, typename TapeT<T>::Val fc2b);

// Position supervision: cross-entropy of the zone logits (1, 3) against the
// discrete class plus squared error of the regressed coordinate (1, 1).
template <class T>
typename TapeT<T>::Val position_loss(TapeT<T>& tape, typename TapeT<T>::Val logits,
                                     typename TapeT<T>::Val value, const PositionLabel& label);

template <class T>
class DetectorT {
 public:
  using Val = typename TapeT<T>::Val;

  DetectorT(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStoreT<T>& params() { return params_; }
  const ParamStoreT<T>& params() const { return params_; }

  struct Forward {
    std::vector<Val> fused;     // per pyramid level, (1, n_views*pc, h, w)
    Val attention;              // per-channel weights of the finest level; id -1 if unused
    Val scores;                 // (n_anchors) objectness logits
    Val deltas;                 // (n_anchors, 4)
    Val pos_logits;             // (1,3); id -1 if no position head
    Val pos_value;              // (1,1); id -1 if no position head
    std::vector<Box> anchors;
    std::vector<std::array<int, 2>> feature_hw;
    std::vector<int> strides;
  };
  Forward forward(TapeT<T>& tape, const SampleT<T>& sample);

  struct Losses {
    Val total, detection, classification, regression, position;
  };
  Losses loss(TapeT<T>& tape, const SampleT<T>& sample, const LossWeights& w);

  // Grad-free forward + decode + score filter + NMS.
  std::vector<Detection> predict(const SampleT<T>& sample);

 private:
  Val pathway(TapeT<T>& tape, Val view, std::vector<Val>* levels);
  Val fuse_level(TapeT<T>& tape, const std::vector<Val>& per_view, Val* attention_out);

  ModelConfig cfg_;
  ParamStoreT<T> params_;
};

using Detector = DetectorT<double>;

}  // namespace mvdet
