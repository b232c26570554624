// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mvdet/windowing.hpp"

namespace mvdet {

// A (level, width) observation, e.g. a radiologist's manual window choice.
struct WindowSample {
  double level = 0.0;
  double width = 0.0;
};

struct KMeansResult {
  std::vector<WindowSpec> centroids;     // k entries
  std::vector<int> assignments;          // per sample, nearest centroid
  double inertia = 0.0;                  // sum of squared distances
  std::vector<double> inertia_history;   // one entry per Lloyd iteration
  int iterations = 0;
};

// k-means on (level, width) points: k-means++ seeding then Lloyd updates.
// Deterministic given the seed. Stops when the largest centroid movement
// drops below tol or after max_iter iterations. Distance ties pick the lowest
// cluster index; clusters that empty out are re-seeded to the sample farthest
// from its assigned centroid.
KMeansResult cluster_windows(const std::vector<WindowSample>& samples, int k, uint64_t seed,
                             int max_iter = 300, double tol = 1e-6);

}  // namespace mvdet
