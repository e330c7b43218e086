#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixelmap/errors.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// Per-pixel validity over (n, h, w); nonzero is valid. Depth, normals and
// labels share one mask per sample.
struct Mask {
  int n = 1, h = 0, w = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(int n_, int h_, int w_, std::uint8_t fill = 1)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::uint8_t& at(int b, int y, int x) { return v[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::uint8_t at(int b, int y, int x) const { return v[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::size_t count_valid() const {
    std::size_t k = 0;
    for (auto m : v) k += m ? 1 : 0;
    return k;
  }
};

// Class ids over (n, h, w). Values at invalid pixels are unspecified.
struct LabelMap {
  int n = 1, h = 0, w = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

  std::uint8_t& at(int b, int y, int x) { return v[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::uint8_t at(int b, int y, int x) const { return v[(static_cast<std::size_t>(b) * h + y) * w + x]; }
};

// Pinhole camera. Pixel (u, v) at depth Z back-projects to
// ((u-cx)Z/fx, (v-cy)Z/fy, Z); +z into the scene, v axis pointing down.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  static Intrinsics standard(int w, int h) {
    // focal length = image width, principal point at the image center
    return {static_cast<double>(w), static_cast<double>(w), (w - 1) / 2.0, (h - 1) / 2.0};
  }
};

// One record: RGB in [0,1], metric depth in meters, unit normals with the
// camera-facing convention (z component negative), class labels, validity.
struct Sample {
  Tensor rgb;      // (1, 3, h, w)
  Tensor depth;    // (1, 1, h, w)
  Tensor normals;  // (1, 3, h, w)
  LabelMap labels;
  Mask mask;
  Intrinsics intrinsics;

  int height() const { return rgb.h(); }
  int width() const { return rgb.w(); }
};

}  // namespace pixelmap
