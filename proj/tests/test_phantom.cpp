// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <utility>

#include "mvdet/phantom.hpp"
#include "mvdet/windowing.hpp"

using namespace mvdet;

namespace {

bool inside(int px, int py, double cx, double cy, double r) {
  double dx = px + 0.5 - cx, dy = py + 0.5 - cy;
  return dx * dx + dy * dy <= r * r;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("generation is deterministic") {
    PhantomSpec spec;
    spec.n_volumes = 4;
    PhantomDataset a = generate_phantom(spec, 3);
    PhantomDataset b = generate_phantom(spec, 3);
    REQUIRE(a.volumes.size() == b.volumes.size());
    for (size_t v = 0; v < a.volumes.size(); ++v)
      CHECK(a.volumes[v].voxels == b.volumes[v].voxels);
    REQUIRE(a.lesions.size() == b.lesions.size());
    for (size_t i = 0; i < a.lesions.size(); ++i) {
      CHECK(a.lesions[i].cx == b.lesions[i].cx);
      CHECK(a.lesions[i].radius == b.lesions[i].radius);
    }
    PhantomDataset c = generate_phantom(spec, 4);
    CHECK(a.volumes[0].voxels != c.volumes[0].voxels);
  }

  TEST_CASE("each volume is independent of the corpus size") {
    PhantomSpec small, large;
    small.n_volumes = 3;
    large.n_volumes = 6;
    PhantomDataset a = generate_phantom(small, 11);
    PhantomDataset b = generate_phantom(large, 11);
    for (int v = 0; v < 3; ++v) {
      CHECK(a.volumes[static_cast<size_t>(v)].voxels == b.volumes[static_cast<size_t>(v)].voxels);
      CHECK(a.gt[static_cast<size_t>(v)].size() == b.gt[static_cast<size_t>(v)].size());
    }
    // a later volume equals the same volume of a run whose seed starts there
    PhantomDataset shifted = generate_phantom(small, 11 + 3);
    CHECK(shifted.volumes[0].voxels == b.volumes[3].voxels);
  }

  TEST_CASE("zone labels follow thirds of the z range") {
    CHECK(zone_of(0.0) == BodyZone::chest);
    CHECK(zone_of(0.32) == BodyZone::chest);
    CHECK(zone_of(0.34) == BodyZone::abdomen);
    CHECK(zone_of(0.65) == BodyZone::abdomen);
    CHECK(zone_of(0.67) == BodyZone::pelvis);
    CHECK(zone_of(1.0) == BodyZone::pelvis);

    PhantomSpec spec;
    spec.n_volumes = 2;
    PhantomDataset d = generate_phantom(spec, 5);
    int nz = spec.slices_per_volume;
    for (const auto& vol_labels : d.labels) {
      REQUIRE(static_cast<int>(vol_labels.size()) == nz);
      for (int z = 0; z < nz; ++z) {
        double p = static_cast<double>(z) / (nz - 1);
        CHECK(vol_labels[static_cast<size_t>(z)].p == p);
        CHECK(vol_labels[static_cast<size_t>(z)].cls == static_cast<int>(zone_of(p)));
      }
    }
  }

  TEST_CASE("designated windows pair zones with rendering views") {
    CHECK(designated_window(BodyZone::chest) == 1);
    CHECK(designated_window(BodyZone::abdomen) == 0);
    CHECK(designated_window(BodyZone::pelvis) == 0);

    PhantomSpec spec;
    spec.n_volumes = 4;
    PhantomDataset d = generate_phantom(spec, 9);
    for (const LesionInfo& l : d.lesions) {
      CHECK(l.window == designated_window(l.zone));
      CHECK(static_cast<int>(l.zone) ==
            d.labels[static_cast<size_t>(l.volume)][static_cast<size_t>(l.slice)].cls);
    }
  }

  TEST_CASE("lesions are bright in their window and faint in the wide one") {
    PhantomSpec spec;
    spec.n_volumes = 12;
    PhantomDataset d = generate_phantom(spec, 7);
    ViewSet views = default_views();
    REQUIRE(!d.lesions.empty());
    for (const LesionInfo& l : d.lesions) {
      double designated = lesion_contrast(d, l, views.windows[static_cast<size_t>(l.window)]);
      double wide = lesion_contrast(d, l, kWideWindow);
      CHECK(designated > 0.2);
      CHECK(wide < 0.05);
    }
  }

  TEST_CASE("ground-truth boxes bound the painted disks exactly") {
    PhantomSpec spec;
    spec.n_volumes = 3;
    PhantomDataset d = generate_phantom(spec, 13);
    std::map<std::pair<int, int>, int> per_slice;
    for (const LesionInfo& l : d.lesions) {
      per_slice[{l.volume, l.slice}]++;
      // recompute the tight box over pixel centers inside the disk
      int min_x = spec.image_size, max_x = -1, min_y = spec.image_size, max_y = -1;
      for (int y = 0; y < spec.image_size; ++y)
        for (int x = 0; x < spec.image_size; ++x)
          if (inside(x, y, l.cx, l.cy, l.radius)) {
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
          }
      REQUIRE(max_x >= 0);
      CHECK(l.box.x1 == min_x);
      CHECK(l.box.y1 == min_y);
      CHECK(l.box.x2 == max_x + 1);
      CHECK(l.box.y2 == max_y + 1);
      CHECK(l.box.x1 >= 0);
      CHECK(l.box.y2 <= spec.image_size);
    }
    // the per-slice gt lists carry exactly these boxes
    int total = 0;
    for (size_t v = 0; v < d.gt.size(); ++v)
      for (size_t z = 0; z < d.gt[v].size(); ++z) {
        int n = static_cast<int>(d.gt[v][z].size());
        total += n;
        CHECK(n >= spec.lesions_min);
        CHECK(n <= spec.lesions_max);
        CHECK(n == per_slice[{static_cast<int>(v), static_cast<int>(z)}]);
      }
    CHECK(total == static_cast<int>(d.lesions.size()));
  }

  TEST_CASE("placement keeps lesions apart from each other and from bones") {
    PhantomSpec spec;
    spec.n_volumes = 6;
    PhantomDataset d = generate_phantom(spec, 17);
    for (size_t i = 0; i < d.lesions.size(); ++i)
      for (size_t j = i + 1; j < d.lesions.size(); ++j) {
        const LesionInfo &a = d.lesions[i], &b = d.lesions[j];
        if (a.volume != b.volume || a.slice != b.slice) continue;
        double dist = std::hypot(a.cx - b.cx, a.cy - b.cy);
        CHECK(dist > a.radius + b.radius + 3.0);
      }
    for (const LesionInfo& l : d.lesions)
      for (const BlobInfo& b : d.bones) {
        if (l.volume != b.volume || l.slice != b.slice) continue;
        CHECK(std::hypot(l.cx - b.cx, l.cy - b.cy) > l.radius + b.radius + 2.0);
      }
  }

  TEST_CASE("bone blobs appear only on pelvis slices, at the configured count") {
    PhantomSpec spec;
    spec.n_volumes = 5;
    PhantomDataset d = generate_phantom(spec, 19);
    int pelvis_slices = 0;
    for (const auto& vol_labels : d.labels)
      for (const auto& lab : vol_labels)
        if (lab.cls == static_cast<int>(BodyZone::pelvis)) pelvis_slices++;
    CHECK(static_cast<int>(d.bones.size()) == pelvis_slices * spec.bone_blobs);
    for (const BlobInfo& b : d.bones)
      CHECK(d.labels[static_cast<size_t>(b.volume)][static_cast<size_t>(b.slice)].cls ==
            static_cast<int>(BodyZone::pelvis));
  }

  TEST_CASE("background voxels track their zone band") {
    PhantomSpec spec;
    spec.n_volumes = 2;
    PhantomDataset d = generate_phantom(spec, 23);
    for (int v = 0; v < spec.n_volumes; ++v) {
      const HuVolume& vol = d.volumes[static_cast<size_t>(v)];
      for (int z = 0; z < spec.slices_per_volume; ++z) {
        auto painted = [&](int x, int y) {
          for (const LesionInfo& l : d.lesions)
            if (l.volume == v && l.slice == z && inside(x, y, l.cx, l.cy, l.radius + 2.0))
              return true;
          for (const BlobInfo& b : d.bones)
            if (b.volume == v && b.slice == z && inside(x, y, b.cx, b.cy, b.radius + 2.0))
              return true;
          return false;
        };
        double sum = 0;
        int n = 0;
        for (int y = 0; y < spec.image_size; ++y)
          for (int x = 0; x < spec.image_size; ++x)
            if (!painted(x, y)) {
              sum += vol.at(z, y, x);
              n++;
            }
        REQUIRE(n > 0);
        int cls = d.labels[static_cast<size_t>(v)][static_cast<size_t>(z)].cls;
        double bg = cls == 0 ? spec.lung_hu : (cls == 1 ? spec.soft_hu : spec.pelvis_hu);
        CHECK(std::abs(sum / n - bg) < 2.0);
      }
    }
  }

  TEST_CASE("spec validation") {
    PhantomSpec ok;
    CHECK_NOTHROW(check_phantom_spec(ok));
    auto bad = ok;
    bad.n_volumes = 0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.slices_per_volume = 0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.z_spacing_mm = 0.0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.noise_sigma = -1.0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.lesions_max = 0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.radius_min = 0.5;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.image_size = 23;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.bone_radius = 0.5;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
    bad = ok;
    bad.max_retries = 0;
    CHECK_THROWS_AS(check_phantom_spec(bad), Error);
  }
}
