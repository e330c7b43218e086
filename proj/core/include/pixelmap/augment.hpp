// Training-time augmentation. One sampled parameter set is applied
// consistently to every channel of a Sample:
//   geometry  — zoom s and rotation theta about the principal point, then
//               translation t, with optional horizontal flip applied first
//               (output = R(theta) * S(s) * F(src - c) + c + t, resampled
//               by the inverse map);
//   values    — depth divided by s; normal vectors flipped (n_x negated),
//               rotated in-plane by theta, n_z multiplied by s, then
//               renormalized (the inverse-transpose of the world map);
//   photometric — per-channel gains and contrast about 0.5 on RGB only,
//               clamped to [0,1].
// RGB and depth are bilinear-resampled; labels, mask, and normal vectors use
// the nearest source pixel. An output pixel stays valid only when every
// source pixel its value draws on is in bounds and valid.
#pragma once

#include <array>

#include "pixelmap/rng.hpp"
#include "pixelmap/sample.hpp"

namespace pixelmap {

struct AugmentConfig {
  double scale_min = 1.0;
  double scale_max = 1.5;
  double rot_max_deg = 5.0;     // theta ~ U(-max, max)
  double trans_frac = 0.1;      // |tx| <= frac*W, |ty| <= frac*H
  double gain_min = 0.8;
  double gain_max = 1.2;
  double contrast_min = 0.5;
  double contrast_max = 2.0;
  double flip_prob = 0.5;
};

struct AugmentParams {
  double s = 1.0;
  double theta = 0.0;  // radians
  double tx = 0.0, ty = 0.0;
  bool flip = false;
  std::array<double, 3> gains = {1.0, 1.0, 1.0};
  double contrast = 1.0;

  bool is_identity() const {
    return s == 1.0 && theta == 0.0 && tx == 0.0 && ty == 0.0 && !flip &&
           gains[0] == 1.0 && gains[1] == 1.0 && gains[2] == 1.0 &&
           contrast == 1.0;
  }
};

// Independent draws in a fixed order (s, theta, tx, ty, flip, gains rgb,
// contrast) so a fixed seed reproduces the stream. ConfigError on invalid
// ranges.
AugmentParams sample_params(Rng& rng, const AugmentConfig& cfg, int width,
                            int height);

// Identity params return the sample unchanged bit-for-bit.
Sample apply_augment(const Sample& sample, const AugmentParams& p);

}  // namespace pixelmap
