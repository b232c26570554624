// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvdet/kmeans.hpp"
#include "mvdet/rng.hpp"

using namespace mvdet;

namespace {

// Tight blobs around the three rendering windows.
std::vector<WindowSample> three_blobs(uint64_t seed, int per_blob, double sigma) {
  const double centers[3][2] = {{50, 449}, {-505, 1980}, {446, 1960}};
  Rng rng(seed);
  std::vector<WindowSample> out;
  for (auto& c : centers)
    for (int i = 0; i < per_blob; ++i)
      out.push_back({c[0] + rng.normal(0.0, sigma), c[1] + rng.normal(0.0, sigma)});
  Rng shuf(seed ^ 0x9e3779b97f4a7c15ull);
  shuf.shuffle(out);
  return out;
}

std::vector<WindowSpec> sorted_by_level(std::vector<WindowSpec> cs) {
  std::sort(cs.begin(), cs.end(),
            [](const WindowSpec& a, const WindowSpec& b) { return a.level < b.level; });
  return cs;
}

double l2(const WindowSpec& c, double level, double width) {
  return std::hypot(c.level - level, c.width - width);
}

}  // namespace

TEST_SUITE("kmeans") {
  TEST_CASE("recovers three planted window blobs") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      auto res = cluster_windows(three_blobs(seed, 40, 4.0), 3, seed);
      auto cs = sorted_by_level(res.centroids);
      CHECK(l2(cs[0], -505, 1980) < 15.0);
      CHECK(l2(cs[1], 50, 449) < 15.0);
      CHECK(l2(cs[2], 446, 1960) < 15.0);
    }
  }

  TEST_CASE("identical seeds give identical results") {
    auto s = three_blobs(3, 25, 6.0);
    auto a = cluster_windows(s, 3, 17);
    auto b = cluster_windows(s, 3, 17);
    REQUIRE(a.centroids.size() == b.centroids.size());
    for (size_t i = 0; i < a.centroids.size(); ++i) {
      CHECK(a.centroids[i].level == b.centroids[i].level);
      CHECK(a.centroids[i].width == b.centroids[i].width);
    }
    CHECK(a.assignments == b.assignments);
    CHECK(a.inertia == b.inertia);
    CHECK(a.iterations == b.iterations);
  }

  TEST_CASE("assignments point at the nearest centroid") {
    auto s = three_blobs(5, 20, 8.0);
    auto res = cluster_windows(s, 3, 9);
    REQUIRE(res.assignments.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i) {
      double own = std::pow(s[i].level - res.centroids[static_cast<size_t>(res.assignments[i])].level, 2) +
                   std::pow(s[i].width - res.centroids[static_cast<size_t>(res.assignments[i])].width, 2);
      for (const WindowSpec& c : res.centroids) {
        double d = std::pow(s[i].level - c.level, 2) + std::pow(s[i].width - c.width, 2);
        CHECK(own <= d + 1e-12);
      }
    }
  }

  TEST_CASE("inertia never increases across Lloyd iterations") {
    auto s = three_blobs(7, 30, 30.0);
    auto res = cluster_windows(s, 3, 23);
    REQUIRE(!res.inertia_history.empty());
    for (size_t i = 1; i < res.inertia_history.size(); ++i)
      CHECK(res.inertia_history[i] <= res.inertia_history[i - 1] + 1e-9);
    CHECK(res.inertia == doctest::Approx(res.inertia_history.back()));
    CHECK(res.iterations == static_cast<int>(res.inertia_history.size()));
  }

  TEST_CASE("k equal to one returns the mean") {
    std::vector<WindowSample> s{{0, 0}, {10, 0}, {20, 30}, {-10, 10}};
    auto res = cluster_windows(s, 1, 0);
    REQUIRE(res.centroids.size() == 1);
    CHECK(res.centroids[0].level == doctest::Approx(5.0));
    CHECK(res.centroids[0].width == doctest::Approx(10.0));
    for (int a : res.assignments) CHECK(a == 0);
  }

  TEST_CASE("k matching distinct samples lands on them") {
    std::vector<WindowSample> s{{0, 0}, {0, 0}, {100, 100}, {100, 100}, {-50, 200}};
    auto res = cluster_windows(s, 3, 41);
    auto cs = sorted_by_level(res.centroids);
    CHECK(l2(cs[0], -50, 200) < 1e-9);
    CHECK(l2(cs[1], 0, 0) < 1e-9);
    CHECK(l2(cs[2], 100, 100) < 1e-9);
    CHECK(res.inertia == doctest::Approx(0.0));
  }

  TEST_CASE("input validation") {
    std::vector<WindowSample> s{{0, 0}, {1, 1}};
    CHECK_THROWS_AS(cluster_windows({}, 1, 0), Error);
    CHECK_THROWS_AS(cluster_windows(s, 0, 0), Error);
    CHECK_THROWS_AS(cluster_windows(s, 3, 0), Error);  // more clusters than distinct points
    CHECK_THROWS_AS(cluster_windows(s, 1, 0, 0), Error);
    CHECK_THROWS_AS(cluster_windows(s, 1, 0, 10, -1.0), Error);
  }

  TEST_CASE("seed variation still recovers well-separated blobs") {
    auto s = three_blobs(11, 30, 5.0);
    for (uint64_t seed : {1ull, 2ull, 3ull, 40ull, 500ull}) {
      auto cs = sorted_by_level(cluster_windows(s, 3, seed).centroids);
      CHECK(l2(cs[0], -505, 1980) < 15.0);
      CHECK(l2(cs[1], 50, 449) < 15.0);
      CHECK(l2(cs[2], 446, 1960) < 15.0);
    }
  }
}
