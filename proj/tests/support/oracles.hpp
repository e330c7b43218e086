#pragma once

// Independent reference implementations used as oracles. These are written
// as plain nested loops with explicit padding/clamping and share no code with
// the library kernels they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "pixelmap/tensor.hpp"

namespace oracle {

using pixelmap::Tensor;

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                     int pad) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int OC = w.dims[0], KH = w.dims[2], KW = w.dims[3];
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({N, OC, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = b.data[oc];
          for (int ic = 0; ic < C; ++ic)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;  // zero pad
                acc += x.at(n, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          out.at(n, oc, oy, ox) = acc;
        }
  return out;
}

inline Tensor maxpool(const Tensor& x, int win_h, int win_w, int stride) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int OH = (H - win_h) / stride + 1;
  const int OW = (W - win_w) / stride + 1;
  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double best = -1e300;
          for (int ky = 0; ky < win_h; ++ky)
            for (int kx = 0; kx < win_w; ++kx)
              best = std::max(best, x.at(n, c, oy * stride + ky, ox * stride + kx));
          out.at(n, c, oy, ox) = best;
        }
  return out;
}

inline Tensor upsample_bilinear(const Tensor& x, int f) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int OH = H * f, OW = W * f;
  auto sample = [](const Tensor& t, int n, int c, double sy, double sx) {
    const int H = t.h(), W = t.w();
    sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
    const int y0 = std::min(static_cast<int>(sy), H - 1);
    const int x0 = std::min(static_cast<int>(sx), W - 1);
    const int y1 = std::min(y0 + 1, H - 1);
    const int x1 = std::min(x0 + 1, W - 1);
    const double fy = sy - y0, fx = sx - x0;
    return t.at(n, c, y0, x0) * (1 - fy) * (1 - fx) + t.at(n, c, y0, x1) * (1 - fy) * fx +
           t.at(n, c, y1, x0) * fy * (1 - fx) + t.at(n, c, y1, x1) * fy * fx;
  };
  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox)
          out.at(n, c, oy, ox) =
              sample(x, n, c, (oy + 0.5) / f - 0.5, (ox + 0.5) / f - 0.5);
  return out;
}

}  // namespace oracle
