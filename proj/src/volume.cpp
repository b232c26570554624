// SPDX-License-Identifier: Apache-2.0
#include "mvdet/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvdet {

namespace {

constexpr char kMagic[] = "HUVOL 1";

void pack_le16(int16_t v, unsigned char* out) {
  uint16_t u = static_cast<uint16_t>(v);
  out[0] = static_cast<unsigned char>(u & 0xff);
  out[1] = static_cast<unsigned char>(u >> 8);
}

int16_t unpack_le16(const unsigned char* in) {
  uint16_t u = static_cast<uint16_t>(in[0]) | static_cast<uint16_t>(in[1]) << 8;
  return static_cast<int16_t>(u);
}

}  // namespace

void check_volume_fields(const HuVolume& vol) {
  if (vol.nz < 1 || vol.ny < 1 || vol.nx < 1)
    fail(Errc::bad_argument, "volume dims must be positive");
  for (double s : vol.spacing_mm)
    if (!(s > 0.0)) fail(Errc::bad_spacing, "voxel spacing must be positive");
  size_t want = static_cast<size_t>(vol.nz) * vol.ny * vol.nx;
  if (vol.voxels.size() != want)
    fail(Errc::size_mismatch, "voxel count does not match dims");
}

Image2D HuVolume::slice_hu(int z) const {
  if (z < 0 || z >= nz) fail(Errc::bad_argument, "slice index out of range");
  Image2D img(ny, nx);
  const int16_t* src = voxels.data() + static_cast<size_t>(z) * ny * nx;
  for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = static_cast<double>(src[i]);
  return img;
}

std::vector<std::string> HuVolume::validate() const {
  check_volume_fields(*this);
  std::vector<std::string> warnings;
  int16_t lo = voxels[0], hi = voxels[0];
  for (int16_t v : voxels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < -1024) warnings.push_back("voxels below -1024 HU (min " + std::to_string(lo) + ")");
  if (hi > 3072) warnings.push_back("voxels above 3072 HU (max " + std::to_string(hi) + ")");
  double smin = *std::min_element(spacing_mm.begin(), spacing_mm.end());
  double smax = *std::max_element(spacing_mm.begin(), spacing_mm.end());
  if (smax / smin > 20.0) warnings.push_back("extreme spacing anisotropy");
  if (spacing_mm[0] > 10.0) warnings.push_back("z spacing above 10 mm");
  return warnings;
}

HuVolume load_volume(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::missing_file, "cannot open volume file: " + path.string());

  std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) fail(Errc::io_failure, "read failed: " + path.string());

  // Header: three '\n'-terminated text lines plus one blank line.
  size_t pos = 0;
  auto next_line = [&](const char* what) {
    size_t nl = content.find('\n', pos);
    if (nl == std::string::npos)
      fail(Errc::malformed_header, std::string("truncated header: missing ") + what);
    std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line("magic") != kMagic)
    fail(Errc::malformed_header, "bad magic line, expected \"HUVOL 1\"");

  HuVolume vol;
  {
    std::istringstream ss(next_line("dims"));
    std::string tag;
    if (!(ss >> tag >> vol.nz >> vol.ny >> vol.nx) || tag != "dims")
      fail(Errc::malformed_header, "bad dims line");
    std::string rest;
    if (ss >> rest) fail(Errc::malformed_header, "trailing tokens on dims line");
    if (vol.nz < 1 || vol.ny < 1 || vol.nx < 1)
      fail(Errc::malformed_header, "dims must be positive");
  }
  {
    std::istringstream ss(next_line("spacing"));
    std::string tag;
    if (!(ss >> tag >> vol.spacing_mm[0] >> vol.spacing_mm[1] >> vol.spacing_mm[2]) ||
        tag != "spacing")
      fail(Errc::malformed_header, "bad spacing line");
    for (double s : vol.spacing_mm)
      if (!(s > 0.0)) fail(Errc::bad_spacing, "spacing must be positive");
  }
  if (!next_line("separator").empty())
    fail(Errc::malformed_header, "expected blank line before payload");

  size_t n = static_cast<size_t>(vol.nz) * vol.ny * vol.nx;
  size_t payload = content.size() - pos;
  if (payload != n * 2)
    fail(Errc::size_mismatch, "payload is " + std::to_string(payload) + " bytes, dims imply " +
                                  std::to_string(n * 2));

  vol.voxels.resize(n);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(content.data()) + pos;
  for (size_t i = 0; i < n; ++i) vol.voxels[i] = unpack_le16(p + 2 * i);
  return vol;
}

void save_volume(const HuVolume& vol, const std::filesystem::path& path) {
  check_volume_fields(vol);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io_failure, "cannot open for writing: " + path.string());

  char head[256];
  std::snprintf(head, sizeof(head), "%s\ndims %d %d %d\nspacing %.17g %.17g %.17g\n\n", kMagic,
                vol.nz, vol.ny, vol.nx, vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]);
  f << head;

  std::vector<unsigned char> buf(vol.voxels.size() * 2);
  for (size_t i = 0; i < vol.voxels.size(); ++i) pack_le16(vol.voxels[i], buf.data() + 2 * i);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) fail(Errc::io_failure, "write failed: " + path.string());
}

HuVolume resample_z(const HuVolume& vol, double target_z_mm) {
  check_volume_fields(vol);
  if (!(target_z_mm > 0.0)) fail(Errc::bad_spacing, "target z spacing must be positive");

  double sz = vol.spacing_mm[0];
  if (target_z_mm == sz || vol.nz == 1) {
    HuVolume out = vol;
    out.spacing_mm[0] = target_z_mm;
    return out;
  }

  double extent = static_cast<double>(vol.nz - 1) * sz;
  int n_out = static_cast<int>(std::floor(extent / target_z_mm + 1e-9)) + 1;

  HuVolume out;
  out.nz = n_out;
  out.ny = vol.ny;
  out.nx = vol.nx;
  out.spacing_mm = {target_z_mm, vol.spacing_mm[1], vol.spacing_mm[2]};
  out.voxels.resize(static_cast<size_t>(n_out) * vol.ny * vol.nx);

  size_t plane = static_cast<size_t>(vol.ny) * vol.nx;
#pragma omp parallel for schedule(static)
  for (int zi = 0; zi < n_out; ++zi) {
    double z = std::min(static_cast<double>(zi) * target_z_mm, extent);
    double pos = z / sz;
    int k = std::min(static_cast<int>(std::floor(pos)), vol.nz - 2);
    double frac = pos - k;
    const int16_t* a = vol.voxels.data() + static_cast<size_t>(k) * plane;
    const int16_t* b = a + plane;
    int16_t* dst = out.voxels.data() + static_cast<size_t>(zi) * plane;
    for (size_t i = 0; i < plane; ++i) {
      double val = (1.0 - frac) * a[i] + frac * b[i];
      dst[i] = static_cast<int16_t>(std::llround(val));
    }
  }
  return out;
}

ResizeResult resize_xy(const Image2D& img, int target_long_side) {
  if (img.rows < 1 || img.cols < 1) fail(Errc::bad_argument, "empty image");
  if (target_long_side < 1) fail(Errc::bad_argument, "resize target must be positive");

  int long_side = std::max(img.rows, img.cols);
  double scale = static_cast<double>(target_long_side) / long_side;
  int out_r, out_c;
  if (img.rows >= img.cols) {
    out_r = target_long_side;
    out_c = std::max(1, static_cast<int>(std::llround(img.cols * scale)));
  } else {
    out_c = target_long_side;
    out_r = std::max(1, static_cast<int>(std::llround(img.rows * scale)));
  }

  ResizeResult res;
  res.scale = scale;
  res.image = Image2D(out_r, out_c);
  Image2D& out = res.image;

  double rstep = out_r > 1 ? static_cast<double>(img.rows - 1) / (out_r - 1) : 0.0;
  double cstep = out_c > 1 ? static_cast<double>(img.cols - 1) / (out_c - 1) : 0.0;
#pragma omp parallel for schedule(static)
  for (int ro = 0; ro < out_r; ++ro) {
    double sr = ro * rstep;
    int r0 = std::min(static_cast<int>(sr), img.rows - 1);
    int r1 = std::min(r0 + 1, img.rows - 1);
    double fr = sr - r0;
    for (int co = 0; co < out_c; ++co) {
      double sc = co * cstep;
      int c0 = std::min(static_cast<int>(sc), img.cols - 1);
      int c1 = std::min(c0 + 1, img.cols - 1);
      double fc = sc - c0;
      double top = (1.0 - fc) * img.at(r0, c0) + fc * img.at(r0, c1);
      double bot = (1.0 - fc) * img.at(r1, c0) + fc * img.at(r1, c1);
      out.at(ro, co) = (1.0 - fr) * top + fr * bot;
    }
  }
  return res;
}

SliceStack extract_slab(const HuVolume& vol, int center_index, int n_ctx) {
  check_volume_fields(vol);
  if (n_ctx < 1 || n_ctx % 2 == 0) fail(Errc::bad_argument, "n_ctx must be odd and positive");
  if (center_index < 0 || center_index >= vol.nz)
    fail(Errc::bad_argument, "center slice out of range");

  SliceStack out;
  out.center_index = center_index;
  out.z_spacing_mm = vol.spacing_mm[0];
  int half = n_ctx / 2;
  out.slices.reserve(static_cast<size_t>(n_ctx));
  for (int d = -half; d <= half; ++d) {
    int z = std::clamp(center_index + d, 0, vol.nz - 1);
    out.slices.push_back(vol.slice_hu(z));
  }
  return out;
}

}  // namespace mvdet
