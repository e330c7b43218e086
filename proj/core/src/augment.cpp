#include "pixelmap/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace {

void check_config(const AugmentConfig& c) {
  if (!(c.scale_min > 0.0) || c.scale_min > c.scale_max) {
    throw ConfigError("augment: scale range must satisfy 0 < min <= max");
  }
  if (c.rot_max_deg < 0.0 || c.trans_frac < 0.0) {
    throw ConfigError("augment: rotation/translation bounds must be >= 0");
  }
  if (c.gain_min > c.gain_max || c.contrast_min > c.contrast_max) {
    throw ConfigError("augment: gain/contrast ranges must satisfy min <= max");
  }
  if (c.flip_prob < 0.0 || c.flip_prob > 1.0) {
    throw ConfigError("augment: flip probability must be in [0,1]");
  }
}

struct Corner {
  int x0, y0, x1, y1;
  double wx, wy;  // weight of the x1/y1 side
  bool need_x1, need_y1;
};

Corner split(double sx, double sy) {
  Corner c;
  c.x0 = static_cast<int>(std::floor(sx));
  c.y0 = static_cast<int>(std::floor(sy));
  c.wx = sx - c.x0;
  c.wy = sy - c.y0;
  c.x1 = c.x0 + 1;
  c.y1 = c.y0 + 1;
  c.need_x1 = c.wx > 0.0;
  c.need_y1 = c.wy > 0.0;
  return c;
}

}  // namespace

AugmentParams sample_params(Rng& rng, const AugmentConfig& cfg, int width,
                            int height) {
  check_config(cfg);
  AugmentParams p;
  p.s = cfg.scale_min == cfg.scale_max ? cfg.scale_min
                                       : rng.uniform(cfg.scale_min, cfg.scale_max);
  const double rot_max = cfg.rot_max_deg * std::numbers::pi / 180.0;
  p.theta = cfg.rot_max_deg == 0.0 ? 0.0 : rng.uniform(-rot_max, rot_max);
  p.tx = cfg.trans_frac == 0.0 ? 0.0
                               : rng.uniform(-cfg.trans_frac * width,
                                             cfg.trans_frac * width);
  p.ty = cfg.trans_frac == 0.0 ? 0.0
                               : rng.uniform(-cfg.trans_frac * height,
                                             cfg.trans_frac * height);
  p.flip = cfg.flip_prob == 0.0 ? false : rng.bernoulli(cfg.flip_prob);
  for (int c = 0; c < 3; ++c) {
    p.gains[c] = cfg.gain_min == cfg.gain_max
                     ? cfg.gain_min
                     : rng.uniform(cfg.gain_min, cfg.gain_max);
  }
  p.contrast = cfg.contrast_min == cfg.contrast_max
                   ? cfg.contrast_min
                   : rng.uniform(cfg.contrast_min, cfg.contrast_max);
  return p;
}

Sample apply_augment(const Sample& sample, const AugmentParams& p) {
  if (p.is_identity()) return sample;

  const int H = sample.height(), W = sample.width();
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double cos_t = std::cos(p.theta), sin_t = std::sin(p.theta);
  const bool geometric =
      p.s != 1.0 || p.theta != 0.0 || p.tx != 0.0 || p.ty != 0.0 || p.flip;

  Sample out;
  out.intrinsics = sample.intrinsics;  // held fixed; the mask absorbs shifts
  out.rgb = Tensor::zeros({1, 3, H, W});
  out.depth = Tensor::zeros({1, 1, H, W});
  out.normals = Tensor::zeros({1, 3, H, W});
  out.labels = LabelMap(1, H, W);
  out.mask = Mask(1, H, W, 0);

  if (!geometric) {
    out.depth = sample.depth;
    out.normals = sample.normals;
    out.labels = sample.labels;
    out.mask = sample.mask;
    out.rgb = sample.rgb;
  } else {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        // inverse map: undo translation, rotation, scale, then flip
        const double qx = x - cx - p.tx, qy = y - cy - p.ty;
        double rx = (cos_t * qx + sin_t * qy) / p.s;
        const double ry = (-sin_t * qx + cos_t * qy) / p.s;
        if (p.flip) rx = -rx;
        const double sx = rx + cx, sy = ry + cy;

        const Corner c = split(sx, sy);
        if (c.x0 < 0 || c.y0 < 0 || (c.need_x1 ? c.x1 : c.x0) >= W ||
            (c.need_y1 ? c.y1 : c.y0) >= H) {
          continue;  // draws outside the source: invalid
        }

        auto m = [&](int yy, int xx) { return sample.mask.at(0, yy, xx) != 0; };
        bool valid = m(c.y0, c.x0);
        if (c.need_x1) valid = valid && m(c.y0, c.x1);
        if (c.need_y1) valid = valid && m(c.y1, c.x0);
        if (c.need_x1 && c.need_y1) valid = valid && m(c.y1, c.x1);

        auto bilinear = [&](const Tensor& t, int ch) {
          const double v00 = t.at(0, ch, c.y0, c.x0);
          const double v01 = c.need_x1 ? t.at(0, ch, c.y0, c.x1) : 0.0;
          const double v10 = c.need_y1 ? t.at(0, ch, c.y1, c.x0) : 0.0;
          const double v11 =
              c.need_x1 && c.need_y1 ? t.at(0, ch, c.y1, c.x1) : 0.0;
          return (1 - c.wy) * ((1 - c.wx) * v00 + c.wx * v01) +
                 c.wy * ((1 - c.wx) * v10 + c.wx * v11);
        };

        // dense channels resample wherever the draw is in bounds; the mask
        // alone records which results are trustworthy
        for (int ch = 0; ch < 3; ++ch) out.rgb.at(0, ch, y, x) = bilinear(sample.rgb, ch);

        if (valid) out.mask.at(0, y, x) = 1;
        out.depth.at(0, 0, y, x) = bilinear(sample.depth, 0) / p.s;

        const int nx = static_cast<int>(std::lround(sx));
        const int ny = static_cast<int>(std::lround(sy));
        out.labels.at(0, y, x) = sample.labels.at(0, ny, nx);

        double v0 = sample.normals.at(0, 0, ny, nx);
        const double v1 = sample.normals.at(0, 1, ny, nx);
        double v2 = sample.normals.at(0, 2, ny, nx);
        if (p.flip) v0 = -v0;
        double w0 = cos_t * v0 - sin_t * v1;
        double w1 = sin_t * v0 + cos_t * v1;
        if (p.s != 1.0) {
          // only scaling changes the norm; renormalizing in the orthogonal
          // case would perturb bits and break flip involution
          v2 *= p.s;
          const double norm =
              std::max(std::sqrt(w0 * w0 + w1 * w1 + v2 * v2), 1e-12);
          w0 /= norm;
          w1 /= norm;
          v2 /= norm;
        }
        out.normals.at(0, 0, y, x) = w0;
        out.normals.at(0, 1, y, x) = w1;
        out.normals.at(0, 2, y, x) = v2;
      }
    }
  }

  const bool photometric = p.gains[0] != 1.0 || p.gains[1] != 1.0 ||
                           p.gains[2] != 1.0 || p.contrast != 1.0;
  if (photometric) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int ch = 0; ch < 3; ++ch) {
      double* v = out.rgb.data.data() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double g = p.gains[ch] * v[i];
        v[i] = std::clamp(0.5 + p.contrast * (g - 0.5), 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace pixelmap
