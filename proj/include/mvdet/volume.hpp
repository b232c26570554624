// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvdet/error.hpp"

namespace mvdet {

// Single-channel float image, row-major.
struct Image2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Image2D() = default;
  Image2D(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// CT volume in Hounsfield units, z-major int16 voxels.
// Slices are ordered head to feet; spacing is (z, y, x) in millimetres.
struct HuVolume {
  int nz = 0, ny = 0, nx = 0;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::vector<int16_t> voxels;

  int16_t at(int z, int y, int x) const {
    return voxels[(static_cast<size_t>(z) * ny + y) * nx + x];
  }
  int16_t& at(int z, int y, int x) {
    return voxels[(static_cast<size_t>(z) * ny + y) * nx + x];
  }

  Image2D slice_hu(int z) const;

  // Non-fatal plausibility warnings (values far outside the clinical HU range,
  // anisotropy extremes). Structural problems throw instead.
  std::vector<std::string> validate() const;
};

// A stack of context slices around a center slice, still in HU.
struct SliceStack {
  std::vector<Image2D> slices;
  int center_index = 0;      // index into the source volume
  double z_spacing_mm = 0.0;
};

struct ResizeResult {
  Image2D image;
  double scale = 1.0;  // output long side / input long side
};

// File format "HUVOL 1": three text header lines (magic+version, dims z y x,
// spacing z y x), one blank line, then little-endian int16 voxels z-major.
HuVolume load_volume(const std::filesystem::path& path);
void save_volume(const HuVolume& vol, const std::filesystem::path& path);

// Linear interpolation along z onto a uniform grid with the given spacing.
// The output grid spans [0, (nz-1)*spacing_z] of the source; values round to
// the nearest integer HU, ties away from zero. Equal spacing is an exact copy.
HuVolume resample_z(const HuVolume& vol, double target_z_mm = 2.0);

// Bilinear resize so the longer side equals target_long_side; aspect ratio is
// preserved. Corner-aligned sampling, so corner pixels map exactly.
ResizeResult resize_xy(const Image2D& img, int target_long_side = 800);

// n_ctx consecutive slices centered on center_index; out-of-range indices are
// clamped (edge slices repeat). n_ctx must be odd and center in range.
SliceStack extract_slab(const HuVolume& vol, int center_index, int n_ctx);

void check_volume_fields(const HuVolume& vol);

}  // namespace mvdet
