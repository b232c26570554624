// SPDX-License-Identifier: Apache-2.0
#include "mvdet/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvdet {

std::vector<Box> generate_anchors(const std::vector<std::array<int, 2>>& feature_hw,
                                  const AnchorSet& set, const std::vector<int>& strides) {
  if (feature_hw.empty()) fail(Errc::bad_argument, "no feature levels");
  if (feature_hw.size() != strides.size())
    fail(Errc::bad_argument, "one stride per feature level required");
  if (feature_hw.size() > set.scales.size())
    fail(Errc::bad_argument, "more feature levels than anchor scales");
  if (set.aspect_ratios.empty()) fail(Errc::bad_argument, "no aspect ratios");
  for (double r : set.aspect_ratios)
    if (!(r > 0.0)) fail(Errc::bad_argument, "aspect ratios must be positive");
  for (double s : set.scales)
    if (!(s > 0.0)) fail(Errc::bad_argument, "anchor scales must be positive");

  std::vector<Box> out;
  for (size_t l = 0; l < feature_hw.size(); ++l) {
    int h = feature_hw[l][0], w = feature_hw[l][1];
    int stride = strides[l];
    if (h < 1 || w < 1 || stride < 1) fail(Errc::bad_argument, "bad feature shape or stride");
    double s = set.scales[l];
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double cx = (j + 0.5) * stride;
        double cy = (i + 0.5) * stride;
        for (double r : set.aspect_ratios) {
          double bw = s * std::sqrt(r);
          double bh = s / std::sqrt(r);
          out.push_back({cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2});
        }
      }
    }
  }
  return out;
}

double iou(const Box& a, const Box& b) {
  double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  double inter = (ix > 0 && iy > 0) ? ix * iy : 0.0;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::array<double, 4> encode_box(const Box& anchor, const Box& gt) {
  if (!(anchor.w() > 0 && anchor.h() > 0)) fail(Errc::bad_argument, "degenerate anchor");
  if (!(gt.w() > 0 && gt.h() > 0)) fail(Errc::bad_argument, "degenerate gt box");
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& delta, double img_w, double img_h) {
  if (!(anchor.w() > 0 && anchor.h() > 0)) fail(Errc::bad_argument, "degenerate anchor");
  double cx = anchor.cx() + delta[0] * anchor.w();
  double cy = anchor.cy() + delta[1] * anchor.h();
  double w = anchor.w() * std::exp(delta[2]);
  double h = anchor.h() * std::exp(delta[3]);
  Box b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  b.x1 = std::clamp(b.x1, 0.0, img_w);
  b.x2 = std::clamp(b.x2, 0.0, img_w);
  b.y1 = std::clamp(b.y1, 0.0, img_h);
  b.y2 = std::clamp(b.y2, 0.0, img_h);
  return b;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  if (!(iou_thresh >= 0.0 && iou_thresh <= 1.0))
    fail(Errc::bad_argument, "nms threshold must be in [0,1]");
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });

  std::vector<Detection> kept;
  for (size_t idx : order) {
    bool ok = true;
    for (const Detection& k : kept) {
      if (iou(dets[idx].box, k.box) > iou_thresh) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(dets[idx]);
  }
  return kept;
}

AnchorAssignment assign_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                                double pos_iou, double neg_iou) {
  if (!(pos_iou > 0.0 && pos_iou <= 1.0)) fail(Errc::bad_argument, "positive threshold out of range");
  if (!(neg_iou >= 0.0 && neg_iou <= pos_iou))
    fail(Errc::bad_argument, "negative threshold above positive");
  AnchorAssignment out;
  out.label.assign(anchors.size(), 0);
  out.matched_gt.assign(anchors.size(), -1);
  for (size_t a = 0; a < anchors.size(); ++a) {
    double best = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      double v = iou(anchors[a], gts[g]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best >= pos_iou && best_gt >= 0) {
      out.label[a] = 1;
      out.matched_gt[a] = best_gt;
    } else if (best < neg_iou) {
      out.label[a] = 0;
    } else {
      out.label[a] = -1;
    }
  }
  return out;
}

Box flip_horizontal(const Box& b, double image_w) {
  return {image_w - b.x2, b.y1, image_w - b.x1, b.y2};
}

}  // namespace mvdet
