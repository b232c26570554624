// SPDX-License-Identifier: Apache-2.0
#include "mvdet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mvdet/rng.hpp"

namespace mvdet {

void check_model_config(const ModelConfig& cfg) {
  if (cfg.n_ctx < 1 || cfg.n_ctx % 2 == 0) fail(Errc::bad_argument, "n_ctx must be odd");
  if (cfg.n_views < 1) fail(Errc::bad_argument, "n_views must be >= 1");
  if (cfg.backbone.channels.empty()) fail(Errc::bad_argument, "backbone needs stages");
  for (int c : cfg.backbone.channels)
    if (c < 1) fail(Errc::bad_argument, "stage channels must be positive");
  if (cfg.backbone.pyramid_channels < 1) fail(Errc::bad_argument, "pyramid channels must be positive");
  if (cfg.backbone.pyramid_levels < 1 ||
      cfg.backbone.pyramid_levels > static_cast<int>(cfg.backbone.channels.size()))
    fail(Errc::bad_argument, "pyramid levels out of range");
  if (cfg.attention_reduction < 1) fail(Errc::bad_argument, "attention reduction must be >= 1");
  if (cfg.head_hidden < 1) fail(Errc::bad_argument, "head hidden channels must be >= 1");
  if (static_cast<int>(cfg.anchors.scales.size()) < cfg.backbone.pyramid_levels)
    fail(Errc::bad_argument, "need one anchor scale per pyramid level");
  if (cfg.anchors.aspect_ratios.empty()) fail(Errc::bad_argument, "no aspect ratios");
  if (!(cfg.positive_iou > 0 && cfg.positive_iou <= 1) ||
      !(cfg.negative_iou >= 0 && cfg.negative_iou <= cfg.positive_iou))
    fail(Errc::bad_argument, "bad anchor iou thresholds");
  if (!(cfg.score_thresh >= 0 && cfg.score_thresh <= 1))
    fail(Errc::bad_argument, "score threshold out of range");
  if (!(cfg.nms_iou >= 0 && cfg.nms_iou <= 1)) fail(Errc::bad_argument, "nms iou out of range");
}

void check_loss_weights(const LossWeights& w) {
  if (!(w.lambda_reg >= 0) || !(w.lambda_pos >= 0))
    fail(Errc::bad_argument, "loss weights must be non-negative");
}

namespace {

template <class T>
TensorT<T> he_uniform(Rng& rng, int fan_in, std::vector<int> shape) {
  TensorT<T> t(std::move(shape));
  double limit = std::sqrt(6.0 / fan_in);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
DetectorT<T>::DetectorT(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  check_model_config(cfg_);
  Rng rng(seed);

  int prev = cfg_.n_ctx;
  for (size_t s = 0; s < cfg_.backbone.channels.size(); ++s) {
    int ch = cfg_.backbone.channels[s];
    std::string base = "stage" + std::to_string(s);
    params_.add(base + ".w", he_uniform<T>(rng, prev * 9, {ch, prev, 3, 3}));
    params_.add(base + ".b", TensorT<T>({ch}));
    prev = ch;
  }

  int pc = cfg_.backbone.pyramid_channels;
  int levels = cfg_.backbone.pyramid_levels;
  int first_stage = static_cast<int>(cfg_.backbone.channels.size()) - levels;
  for (int l = 0; l < levels; ++l) {
    int in_ch = cfg_.backbone.channels[static_cast<size_t>(first_stage + l)];
    std::string base = "lateral" + std::to_string(l);
    params_.add(base + ".w", he_uniform<T>(rng, in_ch, {pc, in_ch, 1, 1}));
    params_.add(base + ".b", TensorT<T>({pc}));
  }
  for (int l = 0; l < levels; ++l) {
    std::string base = "smooth" + std::to_string(l);
    params_.add(base + ".w", he_uniform<T>(rng, pc * 9, {pc, pc, 3, 3}));
    params_.add(base + ".b", TensorT<T>({pc}));
  }

  int fused_ch = cfg_.n_views * pc;
  if (cfg_.fusion == FusionMode::channel_attention) {
    // fc2 starts at zero so every gate opens at exactly 0.5: fusion begins as
    // uniformly scaled concatenation and the gating is learned from there.
    // Random gates at init destabilize early training.
    int hidden = std::max(1, fused_ch / cfg_.attention_reduction);
    params_.add("attn.fc1.w", he_uniform<T>(rng, fused_ch, {hidden, fused_ch}));
    params_.add("attn.fc1.b", TensorT<T>({hidden}));
    params_.add("attn.fc2.w", TensorT<T>({fused_ch, hidden}));
    params_.add("attn.fc2.b", TensorT<T>({fused_ch}));
  }

  int n_ratio = static_cast<int>(cfg_.anchors.aspect_ratios.size());
  params_.add("head.conv.w", he_uniform<T>(rng, fused_ch * 9, {cfg_.head_hidden, fused_ch, 3, 3}));
  params_.add("head.conv.b", TensorT<T>({cfg_.head_hidden}));
  params_.add("head.out.w", he_uniform<T>(rng, cfg_.head_hidden * 9, {n_ratio * 5, cfg_.head_hidden, 3, 3}));
  params_.add("head.out.b", TensorT<T>({n_ratio * 5}));

  if (cfg_.position_head) {
    params_.add("pos.cls.w", he_uniform<T>(rng, fused_ch, {3, fused_ch}));
    params_.add("pos.cls.b", TensorT<T>({3}));
    params_.add("pos.reg.w", he_uniform<T>(rng, fused_ch, {1, fused_ch}));
    params_.add("pos.reg.b", TensorT<T>({1}));
  }
}

template <class T>
typename TapeT<T>::Val DetectorT<T>::pathway(TapeT<T>& tape, Val view, std::vector<Val>* levels) {
  std::vector<Val> stage_out;
  Val x = view;
  for (size_t s = 0; s < cfg_.backbone.channels.size(); ++s) {
    std::string base = "stage" + std::to_string(s);
    x = tape.relu(tape.conv2d(x, tape.param(*params_.find(base + ".w")),
                              tape.param(*params_.find(base + ".b")), 2, 1));
    stage_out.push_back(x);
  }

  int L = cfg_.backbone.pyramid_levels;
  int first_stage = static_cast<int>(cfg_.backbone.channels.size()) - L;
  std::vector<Val> lat(static_cast<size_t>(L));
  for (int l = 0; l < L; ++l) {
    std::string base = "lateral" + std::to_string(l);
    lat[static_cast<size_t>(l)] =
        tape.conv2d(stage_out[static_cast<size_t>(first_stage + l)],
                    tape.param(*params_.find(base + ".w")),
                    tape.param(*params_.find(base + ".b")), 1, 0);
  }

  levels->assign(static_cast<size_t>(L), Val{});
  Val top = lat[static_cast<size_t>(L - 1)];
  for (int l = L - 1; l >= 0; --l) {
    if (l < L - 1) top = tape.add(tape.upsample_nearest(top, 2), lat[static_cast<size_t>(l)]);
    std::string base = "smooth" + std::to_string(l);
    (*levels)[static_cast<size_t>(l)] =
        tape.conv2d(top, tape.param(*params_.find(base + ".w")),
                    tape.param(*params_.find(base + ".b")), 1, 1);
  }
  return x;
}

template <class T>
typename TapeT<T>::Val fusion_gate(TapeT<T>& tape, typename TapeT<T>::Val fused,
                                   typename TapeT<T>::Val fc1w, typename TapeT<T>::Val fc1b,
                                   typename TapeT<T>::Val fc2w, typename TapeT<T>::Val fc2b) {
  auto pooled = tape.add(tape.global_avg_pool(fused), tape.global_max_pool(fused));
  auto h = tape.relu(tape.fully_connected(pooled, fc1w, fc1b));
  return tape.sigmoid(tape.fully_connected(h, fc2w, fc2b));
}

template <class T>
typename TapeT<T>::Val position_loss(TapeT<T>& tape, typename TapeT<T>::Val logits,
                                     typename TapeT<T>::Val value, const PositionLabel& label) {
  if (label.cls < 0 || label.cls > 2) fail(Errc::bad_data, "position class must be 0, 1, or 2");
  if (!(label.p >= 0.0 && label.p <= 1.0)) fail(Errc::bad_data, "position p must lie in [0,1]");
  TensorT<T> onehot({1, 3});
  onehot.at2(0, label.cls) = T(1);
  TensorT<T> target({1, 1});
  target[0] = static_cast<T>(label.p);
  return tape.add(tape.softmax_cross_entropy(logits, onehot), tape.mse(value, target));
}

template <class T>
typename TapeT<T>::Val DetectorT<T>::fuse_level(TapeT<T>& tape, const std::vector<Val>& per_view,
                                                Val* attention_out) {
  Val f = per_view.size() == 1 ? per_view[0] : tape.concat(per_view, 1);
  if (cfg_.fusion != FusionMode::channel_attention) return f;

  Val w = fusion_gate<T>(tape, f, tape.param(*params_.find("attn.fc1.w")),
                         tape.param(*params_.find("attn.fc1.b")),
                         tape.param(*params_.find("attn.fc2.w")),
                         tape.param(*params_.find("attn.fc2.b")));
  if (attention_out) *attention_out = w;
  return tape.mul_channel(f, w);
}

template <class T>
typename DetectorT<T>::Forward DetectorT<T>::forward(TapeT<T>& tape, const SampleT<T>& sample) {
  if (static_cast<int>(sample.views.size()) != cfg_.n_views)
    fail(Errc::bad_argument, "sample has wrong number of views");
  const TensorT<T>& v0 = sample.views[0];
  if (v0.ndim() != 4 || v0.dim(0) != 1 || v0.dim(1) != cfg_.n_ctx)
    fail(Errc::bad_argument, "view tensors must be (1, n_ctx, h, w)");
  for (const TensorT<T>& v : sample.views)
    if (!v.same_shape(v0)) fail(Errc::bad_argument, "views disagree on shape");
  int n_stages = static_cast<int>(cfg_.backbone.channels.size());
  int div = 1 << n_stages;
  if (v0.dim(2) % div || v0.dim(3) % div || v0.dim(2) / div < 1 || v0.dim(3) / div < 1)
    fail(Errc::bad_argument, "input size must be a positive multiple of " + std::to_string(div));

  Forward out;
  int L = cfg_.backbone.pyramid_levels;
  std::vector<std::vector<Val>> view_levels(static_cast<size_t>(cfg_.n_views));
  for (int v = 0; v < cfg_.n_views; ++v)
    pathway(tape, tape.constant(sample.views[static_cast<size_t>(v)]), &view_levels[static_cast<size_t>(v)]);

  out.fused.resize(static_cast<size_t>(L));
  for (int l = 0; l < L; ++l) {
    std::vector<Val> per_view;
    per_view.reserve(static_cast<size_t>(cfg_.n_views));
    for (int v = 0; v < cfg_.n_views; ++v) per_view.push_back(view_levels[static_cast<size_t>(v)][static_cast<size_t>(l)]);
    out.fused[static_cast<size_t>(l)] = fuse_level(tape, per_view, l == 0 ? &out.attention : nullptr);
  }

  int n_ratio = static_cast<int>(cfg_.anchors.aspect_ratios.size());
  std::vector<Val> scores_l, deltas_l;
  int first_stage = n_stages - L;
  for (int l = 0; l < L; ++l) {
    Val f = out.fused[static_cast<size_t>(l)];
    Val h = tape.relu(tape.conv2d(f, tape.param(*params_.find("head.conv.w")),
                                  tape.param(*params_.find("head.conv.b")), 1, 1));
    Val o = tape.conv2d(h, tape.param(*params_.find("head.out.w")),
                        tape.param(*params_.find("head.out.b")), 1, 1);
    scores_l.push_back(tape.scores_from_head(o, n_ratio));
    deltas_l.push_back(tape.deltas_from_head(o, n_ratio));

    const TensorT<T>& fv = tape.value(f);
    out.feature_hw.push_back({fv.dim(2), fv.dim(3)});
    out.strides.push_back(1 << (first_stage + l + 1));
  }
  out.scores = scores_l.size() == 1 ? scores_l[0] : tape.concat(scores_l, 0);
  out.deltas = deltas_l.size() == 1 ? deltas_l[0] : tape.concat(deltas_l, 0);
  out.anchors = generate_anchors(out.feature_hw, cfg_.anchors, out.strides);

  if (cfg_.position_head) {
    Val pooled = tape.global_avg_pool(out.fused[static_cast<size_t>(L - 1)]);
    out.pos_logits = tape.fully_connected(pooled, tape.param(*params_.find("pos.cls.w")),
                                          tape.param(*params_.find("pos.cls.b")));
    out.pos_value = tape.fully_connected(pooled, tape.param(*params_.find("pos.reg.w")),
                                         tape.param(*params_.find("pos.reg.b")));
  }
  return out;
}

template <class T>
typename DetectorT<T>::Losses DetectorT<T>::loss(TapeT<T>& tape, const SampleT<T>& sample,
                                                 const LossWeights& w) {
  check_loss_weights(w);
  if (cfg_.position_head) {
    if (sample.label.cls < 0 || sample.label.cls > 2)
      fail(Errc::bad_data, "position class must be 0, 1, or 2");
    if (!(sample.label.p >= 0.0 && sample.label.p <= 1.0))
      fail(Errc::bad_data, "position p must lie in [0,1]");
  }

  Forward fwd = forward(tape, sample);
  AnchorAssignment assign =
      assign_anchors(fwd.anchors, sample.gt_boxes, cfg_.positive_iou, cfg_.negative_iou);

  int64_t a = static_cast<int64_t>(fwd.anchors.size());
  TensorT<T> labels({static_cast<int>(a)});
  TensorT<T> cls_mask({static_cast<int>(a)});
  TensorT<T> pos_mask({static_cast<int>(a)});
  TensorT<T> reg_targets({static_cast<int>(a), 4});
  for (int64_t i = 0; i < a; ++i) {
    signed char lab = assign.label[static_cast<size_t>(i)];
    labels[i] = lab == 1 ? T(1) : T(0);
    cls_mask[i] = lab >= 0 ? T(1) : T(0);
    pos_mask[i] = lab == 1 ? T(1) : T(0);
    if (lab == 1) {
      std::array<double, 4> enc = encode_box(fwd.anchors[static_cast<size_t>(i)],
                                             sample.gt_boxes[static_cast<size_t>(assign.matched_gt[static_cast<size_t>(i)])]);
      for (int j = 0; j < 4; ++j) reg_targets.at2(static_cast<int>(i), j) = static_cast<T>(enc[static_cast<size_t>(j)]);
    }
  }

  Losses out;
  out.classification = tape.bce_with_logits_masked(fwd.scores, labels, cls_mask);
  out.regression = tape.smooth_l1_masked(fwd.deltas, reg_targets, pos_mask);
  out.detection =
      tape.add(out.classification, tape.scale(out.regression, static_cast<T>(w.lambda_reg)));

  if (cfg_.position_head) {
    out.position = position_loss<T>(tape, fwd.pos_logits, fwd.pos_value, sample.label);
    out.total = tape.add(out.detection, tape.scale(out.position, static_cast<T>(w.lambda_pos)));
  } else {
    out.position = Val{};
    out.total = out.detection;
  }
  return out;
}

template <class T>
std::vector<Detection> DetectorT<T>::predict(const SampleT<T>& sample) {
  TapeT<T> tape(false);
  Forward fwd = forward(tape, sample);
  const TensorT<T>& scores = tape.value(fwd.scores);
  const TensorT<T>& deltas = tape.value(fwd.deltas);
  double img_h = sample.views[0].dim(2);
  double img_w = sample.views[0].dim(3);

  std::vector<Detection> cands;
  for (int64_t i = 0; i < scores.numel(); ++i) {
    double s = static_cast<double>(sigmoid_scalar(scores[i]));
    if (s < cfg_.score_thresh) continue;
    std::array<double, 4> d{static_cast<double>(deltas.at2(static_cast<int>(i), 0)),
                            static_cast<double>(deltas.at2(static_cast<int>(i), 1)),
                            static_cast<double>(deltas.at2(static_cast<int>(i), 2)),
                            static_cast<double>(deltas.at2(static_cast<int>(i), 3))};
    Box b = decode_box(fwd.anchors[static_cast<size_t>(i)], d, img_w, img_h);
    if (b.area() <= 0.0) continue;
    cands.push_back({b, s});
  }
  return nms(cands, cfg_.nms_iou);
}

template class DetectorT<float>;
template class DetectorT<double>;

template TapeT<float>::Val fusion_gate<float>(TapeT<float>&, TapeT<float>::Val, TapeT<float>::Val,
                                              TapeT<float>::Val, TapeT<float>::Val,
                                              TapeT<float>::Val);
template TapeT<double>::Val fusion_gate<double>(TapeT<double>&, TapeT<double>::Val,
                                                TapeT<double>::Val, TapeT<double>::Val,
                                                TapeT<double>::Val, TapeT<double>::Val);
template TapeT<float>::Val position_loss<float>(TapeT<float>&, TapeT<float>::Val, TapeT<float>::Val,
                                                const PositionLabel&);
template TapeT<double>::Val position_loss<double>(TapeT<double>&, TapeT<double>::Val,
                                                  TapeT<double>::Val, const PositionLabel&);

}  // namespace mvdet
