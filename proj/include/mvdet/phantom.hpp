// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mvdet/boxes.hpp"
#include "mvdet/volume.hpp"
#include "mvdet/windowing.hpp"

namespace mvdet {

// Body zone along z, thirds of the normalized position p in [0,1].
enum class BodyZone { chest = 0, abdomen = 1, pelvis = 2 };

inline BodyZone zone_of(double p) {
  if (p < 1.0 / 3.0) return BodyZone::chest;
  if (p < 2.0 / 3.0) return BodyZone::abdomen;
  return BodyZone::pelvis;
}

struct PositionLabel {
  int cls = 0;     // 0 chest, 1 abdomen, 2 pelvis
  double p = 0.0;  // normalized z in [0,1]
};

// Synthetic CT layout. The HU bands and lesion contrasts are artifact
// constants tuned against the rendering windows: a lesion must be
// high-contrast in exactly one of the three default windows and near-invisible
// in the wide single window. The lung band sits near the wide window's lower
// clamp so chest lesions (still darker) vanish there; soft-tissue lesions use
// a +180 HU bump that the narrow soft window amplifies 9x relative to the
// wide one.
struct PhantomSpec {
  int n_volumes = 20;
  int slices_per_volume = 6;
  int image_size = 48;  // square slices
  double z_spacing_mm = 2.0;
  double xy_spacing_mm = 1.0;

  double lung_hu = -880.0;
  double soft_hu = 40.0;
  double pelvis_hu = 45.0;
  double bone_hu = 700.0;
  double noise_sigma = 12.0;

  int bone_blobs = 2;         // context structures, pelvis slices only
  double bone_radius = 3.5;

  // radius_min keeps the tight box near 14 px, so every lesion overlaps a
  // stride-4 anchor at IoU > 0.5 and anchor assignment never starves.
  int lesions_min = 1;  // per slice
  int lesions_max = 2;
  double radius_min = 7.0;
  double radius_max = 8.0;
  double chest_delta = -600.0;  // lesion HU minus zone background
  double abdomen_delta = 180.0;
  double pelvis_delta = 180.0;
  int max_retries = 500;
};

// Designated window per zone, as an index into default_views():
// chest -> lung window (1), abdomen and pelvis -> soft-tissue window (0).
int designated_window(BodyZone zone);

struct LesionInfo {
  int volume = 0;
  int slice = 0;
  double cx = 0, cy = 0, radius = 0;  // pixel units
  double hu = 0;                      // mean lesion HU before texture noise
  int window = 0;                     // designated window index
  BodyZone zone = BodyZone::chest;
  Box box;                            // tight box around the painted disk
};

// Bone context blob (not a lesion, carries no gt box).
struct BlobInfo {
  int volume = 0;
  int slice = 0;
  double cx = 0, cy = 0, radius = 0;
};

struct PhantomDataset {
  std::vector<HuVolume> volumes;
  std::vector<std::vector<std::vector<Box>>> gt;   // [volume][slice] -> boxes
  std::vector<std::vector<PositionLabel>> labels;  // [volume][slice]
  std::vector<LesionInfo> lesions;
  std::vector<BlobInfo> bones;
};

// Deterministic under (spec, seed): volume v draws from a stream derived as
// seed + v, so volumes are independent of each other and of n_volumes.
PhantomDataset generate_phantom(const PhantomSpec& spec, uint64_t seed);

// Rendered contrast of one lesion in a window: |mean over lesion pixels -
// mean over a background ring|, both measured on the stored (noisy) volume.
// Ring pixels overlapped by other lesions or bone blobs are excluded.
double lesion_contrast(const PhantomDataset& data, const LesionInfo& lesion, const WindowSpec& w);

void check_phantom_spec(const PhantomSpec& spec);

}  // namespace mvdet
