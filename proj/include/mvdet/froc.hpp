// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mvdet/boxes.hpp"

namespace mvdet {

// One evaluated image: its ground-truth lesions and the detector's output.
struct EvalCase {
  std::string image_id;
  std::vector<Box> gt_boxes;
  std::vector<Detection> detections;
};

// Per-detection true-positive flags, aligned with the input detection order.
// Matching is greedy by descending score (ties: earlier input index first);
// a detection is a TP if its best-IoU unmatched gt reaches iou_thresh, and
// that gt (ties: lowest index) is then consumed.
std::vector<char> match_detections(const EvalCase& c, double iou_thresh = 0.5);

struct FrocPoint {
  double threshold = 0.0;        // score cut defining this operating point
  double fps_per_image = 0.0;
  double sensitivity = 0.0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;             // one per distinct score, descending
  std::vector<double> report_rates;
  std::vector<double> sensitivity_at_rates;  // same length as report_rates
  int n_images = 0;
  int n_lesions = 0;
};

// Sensitivity at rate f = the best sensitivity among operating points with
// fps_per_image <= f (0 if none reaches it).
FrocCurve froc(const std::vector<EvalCase>& cases,
               const std::vector<double>& report_rates = {0.5, 1, 2, 3, 4},
               double iou_thresh = 0.5);

// Text table: one column per report rate, one row per named curve,
// sensitivities as percentages with two decimals.
std::string froc_report(const std::vector<std::pair<std::string, FrocCurve>>& rows);

}  // namespace mvdet
