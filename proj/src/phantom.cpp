// SPDX-License-Identifier: Apache-2.0
#include "mvdet/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "mvdet/rng.hpp"

namespace mvdet {

int designated_window(BodyZone zone) {
  return zone == BodyZone::chest ? 1 : 0;
}

void check_phantom_spec(const PhantomSpec& s) {
  if (s.n_volumes < 1) fail(Errc::bad_argument, "n_volumes must be >= 1");
  if (s.slices_per_volume < 1) fail(Errc::bad_argument, "slices_per_volume must be >= 1");
  if (!(s.z_spacing_mm > 0 && s.xy_spacing_mm > 0)) fail(Errc::bad_spacing, "spacing must be positive");
  if (!(s.noise_sigma >= 0)) fail(Errc::bad_argument, "noise sigma must be non-negative");
  if (s.lesions_min < 0 || s.lesions_max < s.lesions_min)
    fail(Errc::bad_argument, "bad lesion count range");
  if (!(s.radius_min >= 1 && s.radius_max >= s.radius_min))
    fail(Errc::bad_argument, "bad lesion radius range");
  if (s.bone_blobs < 0 || !(s.bone_radius >= 1)) fail(Errc::bad_argument, "bad bone blob spec");
  if (s.max_retries < 1) fail(Errc::bad_argument, "max_retries must be >= 1");
  if (s.lesions_max > 0 && s.image_size < static_cast<int>(2 * (s.radius_max + 4)))
    fail(Errc::bad_argument, "image too small for the largest lesion");
}

namespace {

struct Blob {
  double cx, cy, radius;
};

double zone_background(const PhantomSpec& s, BodyZone z) {
  switch (z) {
    case BodyZone::chest: return s.lung_hu;
    case BodyZone::abdomen: return s.soft_hu;
    default: return s.pelvis_hu;
  }
}

double zone_delta(const PhantomSpec& s, BodyZone z) {
  switch (z) {
    case BodyZone::chest: return s.chest_delta;
    case BodyZone::abdomen: return s.abdomen_delta;
    default: return s.pelvis_delta;
  }
}

int16_t to_hu(double v) {
  double r = std::llround(v);
  return static_cast<int16_t>(std::clamp(r, -32768.0, 32767.0));
}

// Pixel centers sit at (x+0.5, y+0.5).
bool in_disk(int px, int py, double cx, double cy, double r) {
  double dx = px + 0.5 - cx;
  double dy = py + 0.5 - cy;
  return dx * dx + dy * dy <= r * r;
}

}  // namespace

PhantomDataset generate_phantom(const PhantomSpec& spec, uint64_t seed) {
  check_phantom_spec(spec);
  PhantomDataset data;
  data.volumes.resize(static_cast<size_t>(spec.n_volumes));
  data.gt.resize(static_cast<size_t>(spec.n_volumes));
  data.labels.resize(static_cast<size_t>(spec.n_volumes));

  int size = spec.image_size;
  int nz = spec.slices_per_volume;

  for (int v = 0; v < spec.n_volumes; ++v) {
    Rng rng(seed + static_cast<uint64_t>(v));
    HuVolume& vol = data.volumes[static_cast<size_t>(v)];
    vol.nz = nz;
    vol.ny = size;
    vol.nx = size;
    vol.spacing_mm = {spec.z_spacing_mm, spec.xy_spacing_mm, spec.xy_spacing_mm};
    vol.voxels.resize(static_cast<size_t>(nz) * size * size);
    data.gt[static_cast<size_t>(v)].resize(static_cast<size_t>(nz));
    data.labels[static_cast<size_t>(v)].resize(static_cast<size_t>(nz));

    for (int z = 0; z < nz; ++z) {
      double p = nz > 1 ? static_cast<double>(z) / (nz - 1) : 0.0;
      BodyZone zone = zone_of(p);
      data.labels[static_cast<size_t>(v)][static_cast<size_t>(z)] = {static_cast<int>(zone), p};

      double bg = zone_background(spec, zone);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          vol.at(z, y, x) = to_hu(bg + spec.noise_sigma * rng.normal());

      // Bone context structures in the pelvis zone. The girdle flanks the
      // midline, so blobs take mirrored lateral anchors with jitter. That also
      // keeps the central field clear for lesion placement.
      std::vector<Blob> bones;
      if (zone == BodyZone::pelvis) {
        for (int b = 0; b < spec.bone_blobs; ++b) {
          double m = spec.bone_radius + 1.0;
          double ax = (b % 2 == 0 ? 0.18 : 0.82) * size;
          double bx = std::clamp(ax + rng.uniform(-3.0, 3.0), m, size - m);
          double by = std::clamp(0.5 * size + rng.uniform(-3.0, 3.0), m, size - m);
          Blob blob{bx, by, spec.bone_radius};
          bones.push_back(blob);
          int lo_y = std::max(0, static_cast<int>(blob.cy - blob.radius - 1));
          int hi_y = std::min(size - 1, static_cast<int>(blob.cy + blob.radius + 1));
          int lo_x = std::max(0, static_cast<int>(blob.cx - blob.radius - 1));
          int hi_x = std::min(size - 1, static_cast<int>(blob.cx + blob.radius + 1));
          for (int y = lo_y; y <= hi_y; ++y)
            for (int x = lo_x; x <= hi_x; ++x)
              if (in_disk(x, y, blob.cx, blob.cy, blob.radius))
                vol.at(z, y, x) = to_hu(spec.bone_hu + spec.noise_sigma * rng.normal());
          data.bones.push_back({v, z, blob.cx, blob.cy, blob.radius});
        }
      }

      // Lesions.
      int count = spec.lesions_min == spec.lesions_max
                      ? spec.lesions_min
                      : static_cast<int>(rng.uniform_int(spec.lesions_min, spec.lesions_max));
      std::vector<LesionInfo> placed;
      for (int li = 0; li < count; ++li) {
        bool ok = false;
        double cx = 0, cy = 0, radius = 0;
        for (int attempt = 0; attempt < spec.max_retries && !ok; ++attempt) {
          radius = rng.uniform(spec.radius_min, spec.radius_max);
          double m = radius + 3.0;
          cx = rng.uniform(m, size - m);
          cy = rng.uniform(m, size - m);
          ok = true;
          for (const LesionInfo& other : placed) {
            double dx = cx - other.cx, dy = cy - other.cy;
            double need = radius + other.radius + 3.0;
            if (dx * dx + dy * dy <= need * need) {
              ok = false;
              break;
            }
          }
          if (ok)
            for (const Blob& b : bones) {
              double dx = cx - b.cx, dy = cy - b.cy;
              double need = radius + b.radius + 2.0;
              if (dx * dx + dy * dy <= need * need) {
                ok = false;
                break;
              }
            }
        }
        if (!ok)
          fail(Errc::bad_data, "lesion placement failed after bounded retries (volume " +
                                   std::to_string(v) + ", slice " + std::to_string(z) + ")");

        double hu = bg + zone_delta(spec, zone);
        int min_x = size, max_x = -1, min_y = size, max_y = -1;
        int lo_y = std::max(0, static_cast<int>(cy - radius - 1));
        int hi_y = std::min(size - 1, static_cast<int>(cy + radius + 1));
        int lo_x = std::max(0, static_cast<int>(cx - radius - 1));
        int hi_x = std::min(size - 1, static_cast<int>(cx + radius + 1));
        for (int y = lo_y; y <= hi_y; ++y)
          for (int x = lo_x; x <= hi_x; ++x)
            if (in_disk(x, y, cx, cy, radius)) {
              vol.at(z, y, x) = to_hu(hu + spec.noise_sigma * rng.normal());
              min_x = std::min(min_x, x);
              max_x = std::max(max_x, x);
              min_y = std::min(min_y, y);
              max_y = std::max(max_y, y);
            }
        if (max_x < 0) fail(Errc::bad_data, "lesion painted no pixels");

        LesionInfo info;
        info.volume = v;
        info.slice = z;
        info.cx = cx;
        info.cy = cy;
        info.radius = radius;
        info.hu = hu;
        info.zone = zone;
        info.window = designated_window(zone);
        info.box = {static_cast<double>(min_x), static_cast<double>(min_y),
                    static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
        placed.push_back(info);
      }
      for (const LesionInfo& info : placed) {
        data.gt[static_cast<size_t>(v)][static_cast<size_t>(z)].push_back(info.box);
        data.lesions.push_back(info);
      }
    }
  }
  return data;
}

double lesion_contrast(const PhantomDataset& data, const LesionInfo& lesion, const WindowSpec& w) {
  const HuVolume& vol = data.volumes[static_cast<size_t>(lesion.volume)];
  Image2D rendered = apply_window(vol.slice_hu(lesion.slice), w);

  auto excluded = [&](int px, int py) {
    for (const LesionInfo& other : data.lesions) {
      if (other.volume != lesion.volume || other.slice != lesion.slice) continue;
      if (other.cx == lesion.cx && other.cy == lesion.cy) continue;
      if (in_disk(px, py, other.cx, other.cy, other.radius + 1.0)) return true;
    }
    for (const BlobInfo& b : data.bones) {
      if (b.volume != lesion.volume || b.slice != lesion.slice) continue;
      if (in_disk(px, py, b.cx, b.cy, b.radius + 1.0)) return true;
    }
    return false;
  };

  double lesion_sum = 0, ring_sum = 0;
  int lesion_n = 0, ring_n = 0;
  for (int y = 0; y < rendered.rows; ++y)
    for (int x = 0; x < rendered.cols; ++x) {
      double dx = x + 0.5 - lesion.cx, dy = y + 0.5 - lesion.cy;
      double d2 = dx * dx + dy * dy;
      double r = lesion.radius;
      if (d2 <= r * r) {
        lesion_sum += rendered.at(y, x);
        lesion_n++;
      } else if (d2 > (r + 1) * (r + 1) && d2 <= (r + 4) * (r + 4) && !excluded(x, y)) {
        ring_sum += rendered.at(y, x);
        ring_n++;
      }
    }
  if (lesion_n == 0 || ring_n == 0) fail(Errc::bad_data, "empty lesion or background ring");
  return std::abs(lesion_sum / lesion_n - ring_sum / ring_n);
}

}  // namespace mvdet
