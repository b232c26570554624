// SPDX-License-Identifier: Apache-2.0
#include "mvdet/windowing.hpp"

namespace mvdet {

ViewSet default_views() {
  return ViewSet{{{50.0, 449.0}, {-505.0, 1980.0}, {446.0, 1960.0}}};
}

Image2D apply_window(const Image2D& hu, const WindowSpec& w) {
  check_window(w);
  Image2D out(hu.rows, hu.cols);
  int64_t n = static_cast<int64_t>(hu.v.size());
#pragma omp parallel for schedule(static) if (n >= 4096)
  for (int64_t i = 0; i < n; ++i) out.v[static_cast<size_t>(i)] = window_value(hu.v[static_cast<size_t>(i)], w);
  return out;
}

std::vector<std::vector<Image2D>> render_views(const SliceStack& slab, const ViewSet& views) {
  if (slab.slices.empty()) fail(Errc::bad_argument, "empty slice stack");
  if (views.windows.empty()) fail(Errc::bad_argument, "empty view set");
  std::vector<std::vector<Image2D>> out(slab.slices.size());
  for (size_t s = 0; s < slab.slices.size(); ++s) {
    out[s].reserve(views.windows.size());
    for (const WindowSpec& w : views.windows) out[s].push_back(apply_window(slab.slices[s], w));
  }
  return out;
}

}  // namespace mvdet
