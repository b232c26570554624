// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "mvdet/error.hpp"

namespace mvdet {

// Axis-aligned box, corner form, pixel units.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double area() const { return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

struct Detection {
  Box box;
  double score = 0.0;
};

// One scale per pyramid level; every scale is paired with every aspect ratio.
struct AnchorSet {
  std::vector<double> scales{16, 32, 64, 128, 256};
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
};

// Anchors for the given feature map shapes, ordered (level, row, col, ratio).
// Centers sit at ((col+0.5)*stride, (row+0.5)*stride); a ratio r box of scale
// s is s*sqrt(r) wide and s/sqrt(r) tall (area-preserving).
std::vector<Box> generate_anchors(const std::vector<std::array<int, 2>>& feature_hw,
                                  const AnchorSet& set, const std::vector<int>& strides);

double iou(const Box& a, const Box& b);

// Box regression transform: deltas (dx, dy, dw, dh) in the usual
// center/log-size parameterization.
std::array<double, 4> encode_box(const Box& anchor, const Box& gt);
Box decode_box(const Box& anchor, const std::array<double, 4>& delta, double img_w, double img_h);

// Greedy non-maximum suppression. Candidates are visited by descending score
// (ties: earlier input index first); survivors end up pairwise IoU <= thresh
// and are returned sorted by descending score.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh = 0.5);

// Anchor labels for training: 1 = positive (best IoU >= pos_iou),
// 0 = negative (best IoU < neg_iou), -1 = ignored. matched_gt holds the
// argmax-IoU gt index (ties: lowest index), -1 where there is none.
struct AnchorAssignment {
  std::vector<signed char> label;
  std::vector<int> matched_gt;
};
AnchorAssignment assign_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                                double pos_iou = 0.5, double neg_iou = 0.3);

Box flip_horizontal(const Box& b, double image_w);

}  // namespace mvdet
