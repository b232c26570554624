// SPDX-License-Identifier: Apache-2.0
#include "mvdet/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mvdet/error.hpp"
#include "mvdet/rng.hpp"

namespace mvdet {

namespace {

double dist2(const WindowSample& s, const WindowSpec& c) {
  double dl = s.level - c.level;
  double dw = s.width - c.width;
  return dl * dl + dw * dw;
}

// Nearest centroid; ties keep the lowest index (strict < while scanning).
int nearest(const WindowSample& s, const std::vector<WindowSpec>& cs, double* d2_out) {
  int best = 0;
  double best_d = dist2(s, cs[0]);
  for (int j = 1; j < static_cast<int>(cs.size()); ++j) {
    double d = dist2(s, cs[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (d2_out) *d2_out = best_d;
  return best;
}

}  // namespace

KMeansResult cluster_windows(const std::vector<WindowSample>& samples, int k, uint64_t seed,
                             int max_iter, double tol) {
  int n = static_cast<int>(samples.size());
  if (n == 0) fail(Errc::bad_data, "no samples to cluster");
  if (k < 1) fail(Errc::bad_argument, "k must be >= 1");
  if (max_iter < 1) fail(Errc::bad_argument, "max_iter must be >= 1");
  if (!(tol >= 0.0)) fail(Errc::bad_argument, "tol must be non-negative");
  {
    std::set<std::pair<double, double>> distinct;
    for (const auto& s : samples) distinct.insert({s.level, s.width});
    if (static_cast<int>(distinct.size()) < k)
      fail(Errc::bad_data, "k exceeds the number of distinct samples");
  }

  Rng rng(seed);
  KMeansResult res;
  res.centroids.resize(static_cast<size_t>(k));

  // k-means++ seeding.
  {
    int first = static_cast<int>(rng.uniform_int(0, n - 1));
    res.centroids[0] = {samples[static_cast<size_t>(first)].level, samples[static_cast<size_t>(first)].width};
    std::vector<double> d2(static_cast<size_t>(n));
    for (int j = 1; j < k; ++j) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double best = dist2(samples[static_cast<size_t>(i)], res.centroids[0]);
        for (int c = 1; c < j; ++c) best = std::min(best, dist2(samples[static_cast<size_t>(i)], res.centroids[static_cast<size_t>(c)]));
        d2[static_cast<size_t>(i)] = best;
        total += best;
      }
      int pick = 0;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[static_cast<size_t>(i)];
          if (acc > r) {
            pick = i;
            break;
          }
        }
      }
      res.centroids[static_cast<size_t>(j)] = {samples[static_cast<size_t>(pick)].level, samples[static_cast<size_t>(pick)].width};
    }
  }

  res.assignments.assign(static_cast<size_t>(n), 0);
  std::vector<double> d2(static_cast<size_t>(n));

  auto assign_all = [&] {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      res.assignments[static_cast<size_t>(i)] = nearest(samples[static_cast<size_t>(i)], res.centroids, &d2[static_cast<size_t>(i)]);
      inertia += d2[static_cast<size_t>(i)];
    }
    return inertia;
  };

  for (int it = 0; it < max_iter; ++it) {
    res.inertia = assign_all();
    res.inertia_history.push_back(res.inertia);
    res.iterations = it + 1;

    // Means of each cluster.
    std::vector<double> sl(static_cast<size_t>(k), 0.0), sw(static_cast<size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      int a = res.assignments[static_cast<size_t>(i)];
      sl[static_cast<size_t>(a)] += samples[static_cast<size_t>(i)].level;
      sw[static_cast<size_t>(a)] += samples[static_cast<size_t>(i)].width;
      cnt[static_cast<size_t>(a)]++;
    }

    std::vector<WindowSpec> next(res.centroids);
    for (int j = 0; j < k; ++j)
      if (cnt[static_cast<size_t>(j)] > 0)
        next[static_cast<size_t>(j)] = {sl[static_cast<size_t>(j)] / cnt[static_cast<size_t>(j)], sw[static_cast<size_t>(j)] / cnt[static_cast<size_t>(j)]};

    // Empty clusters grab the sample farthest from its current centroid.
    std::vector<double> claim(d2);
    for (int j = 0; j < k; ++j) {
      if (cnt[static_cast<size_t>(j)] > 0) continue;
      int far = 0;
      for (int i = 1; i < n; ++i)
        if (claim[static_cast<size_t>(i)] > claim[static_cast<size_t>(far)]) far = i;
      next[static_cast<size_t>(j)] = {samples[static_cast<size_t>(far)].level, samples[static_cast<size_t>(far)].width};
      claim[static_cast<size_t>(far)] = -1.0;
    }

    double move = 0.0;
    for (int j = 0; j < k; ++j) {
      double dl = next[static_cast<size_t>(j)].level - res.centroids[static_cast<size_t>(j)].level;
      double dw = next[static_cast<size_t>(j)].width - res.centroids[static_cast<size_t>(j)].width;
      move = std::max(move, std::sqrt(dl * dl + dw * dw));
    }
    res.centroids = next;
    if (move < tol) break;
  }

  // Restore the nearest-centroid invariant after the final update.
  res.inertia = assign_all();
  return res;
}

}  // namespace mvdet
