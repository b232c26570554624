// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mvdet/error.hpp"
#include "mvdet/volume.hpp"

namespace mvdet {

// Display window: center (level) and width in HU.
struct WindowSpec {
  double level = 0.0;
  double width = 1.0;
};

struct ViewSet {
  std::vector<WindowSpec> windows;
};

// The three windows used for multi-view rendering.
ViewSet default_views();

// Wide window spanning the full clinical range [-1024, 3072]; this is the
// single-view baseline.
inline constexpr WindowSpec kWideWindow{1024.0, 4096.0};

// Rendered intensity in [0,1]. Written as (p-level)/width + 0.5 rather than
// (p-(level-width/2))/width so p == level gives exactly 0.5.
inline double window_value(double hu, const WindowSpec& w) {
  double t = (hu - w.level) / w.width + 0.5;
  return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

Image2D apply_window(const Image2D& hu, const WindowSpec& w);

// One rendered image per (slice, window): result[slice][window].
std::vector<std::vector<Image2D>> render_views(const SliceStack& slab, const ViewSet& views);

inline void check_window(const WindowSpec& w) {
  if (!(w.width > 0.0)) fail(Errc::bad_argument, "window width must be positive");
}

}  // namespace mvdet
