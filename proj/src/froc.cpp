// SPDX-License-Identifier: Apache-2.0
#include "mvdet/froc.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mvdet {

std::vector<char> match_detections(const EvalCase& c, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0))
    fail(Errc::bad_argument, "iou threshold must be in (0,1]");
  std::vector<size_t> order(c.detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (c.detections[a].score != c.detections[b].score)
      return c.detections[a].score > c.detections[b].score;
    return a < b;
  });

  std::vector<char> is_tp(c.detections.size(), 0);
  std::vector<char> gt_taken(c.gt_boxes.size(), 0);
  for (size_t idx : order) {
    double best = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < c.gt_boxes.size(); ++g) {
      if (gt_taken[g]) continue;
      double v = iou(c.detections[idx].box, c.gt_boxes[g]);
      if (v > best) {  // ties keep the lowest gt index
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_thresh) {
      is_tp[idx] = 1;
      gt_taken[static_cast<size_t>(best_gt)] = 1;
    }
  }
  return is_tp;
}

FrocCurve froc(const std::vector<EvalCase>& cases, const std::vector<double>& report_rates,
               double iou_thresh) {
  if (cases.empty()) fail(Errc::bad_data, "no images to evaluate");
  for (double r : report_rates)
    if (!(r >= 0.0)) fail(Errc::bad_argument, "report rates must be non-negative");

  FrocCurve curve;
  curve.n_images = static_cast<int>(cases.size());
  for (const EvalCase& c : cases) curve.n_lesions += static_cast<int>(c.gt_boxes.size());
  if (curve.n_lesions == 0) fail(Errc::bad_data, "no ground-truth lesions to evaluate");

  // TP flags are threshold-independent under greedy matching, so match once
  // and sweep score cuts afterwards.
  std::vector<std::pair<double, char>> scored;
  for (const EvalCase& c : cases) {
    std::vector<char> tp = match_detections(c, iou_thresh);
    for (size_t i = 0; i < tp.size(); ++i) scored.push_back({c.detections[i].score, tp[i]});
  }
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  int tp_acc = 0, fp_acc = 0;
  for (size_t i = 0; i < scored.size();) {
    double s = scored[i].first;
    for (; i < scored.size() && scored[i].first == s; ++i) {
      if (scored[i].second)
        tp_acc++;
      else
        fp_acc++;
    }
    curve.points.push_back({s, static_cast<double>(fp_acc) / curve.n_images,
                            static_cast<double>(tp_acc) / curve.n_lesions});
  }

  curve.report_rates = report_rates;
  for (double r : report_rates) {
    double best = 0.0;
    for (const FrocPoint& p : curve.points)
      if (p.fps_per_image <= r) best = std::max(best, p.sensitivity);
    curve.sensitivity_at_rates.push_back(best);
  }
  return curve;
}

std::string froc_report(const std::vector<std::pair<std::string, FrocCurve>>& rows) {
  if (rows.empty()) fail(Errc::bad_argument, "no rows to report");
  const std::vector<double>& rates = rows[0].second.report_rates;
  for (const auto& [name, c] : rows)
    if (c.report_rates != rates) fail(Errc::bad_argument, "rows disagree on report rates");

  size_t name_w = 6;
  for (const auto& [name, c] : rows) name_w = std::max(name_w, name.size());
  name_w += 2;

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "method";
  for (double r : rates) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", r);
    os << std::right << std::setw(9) << buf;
  }
  os << '\n';
  for (const auto& [name, c] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name;
    os << std::right << std::fixed << std::setprecision(2);
    for (double s : c.sensitivity_at_rates) os << std::setw(9) << s * 100.0;
    os.unsetf(std::ios::fixed);
    os << '\n';
  }
  return os.str();
}

}  // namespace mvdet
