#pragma once

#include <string>
#include <vector>

#include "pixelmap/rng.hpp"
#include "pixelmap/tape.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// 2D cross-correlation layer. Weights are (out_ch, in_ch, kh, kw), bias is
// (out_ch). Zero padding, square stride.
struct ConvSpec {
  std::string name;
  int in_ch = 0, out_ch = 0;
  int kh = 0, kw = 0;
  int stride = 1;
  int pad = 0;
  double lr_mult = 1.0;
  Tensor w, b;
};

// Fully connected layer over flattened input features. Weights (out, in).
struct LinearSpec {
  std::string name;
  int in = 0, out = 0;
  double lr_mult = 1.0;
  Tensor w, b;
};

// Initialization draws uniform(-a, a) with a = sqrt(3 / fan_in), so weight
// variance is 1/fan_in; biases start at zero.
ConvSpec make_conv(const std::string& name, int in_ch, int out_ch, int kernel,
                   int stride, int pad, Rng& rng, double lr_mult = 1.0);
LinearSpec make_linear(const std::string& name, int in, int out, Rng& rng,
                       double lr_mult = 1.0);

inline int conv_out_size(int n, int k, int stride, int pad) {
  return (n + 2 * pad - k) / stride + 1;
}
inline int pool_out_size(int n, int window, int stride) {
  return (n - window) / stride + 1;
}

// All ops consume/produce rank-4 (n, c, h, w) activations unless noted, and
// record their backward step on the tape. Returned pointers are tape-owned.
Tensor* conv2d(Tape& tape, Tensor* x, ConvSpec& spec);
// same weights, caller-chosen zero padding; used where a precomputed window
// already carries the padding
Tensor* conv2d_pad(Tape& tape, Tensor* x, ConvSpec& spec, int pad);
Tensor* maxpool(Tape& tape, Tensor* x, int window, int stride);
// rectangular window variant; the layer planner clamps windows on maps
// smaller than the nominal window
Tensor* maxpool_rect(Tape& tape, Tensor* x, int win_h, int win_w, int stride);
// x is flattened to (n, c*h*w); output is rank-2 (n, out)
Tensor* linear(Tape& tape, Tensor* x, LinearSpec& spec);
Tensor* relu(Tape& tape, Tensor* x);
// integer-factor bilinear upsampling, align-corners-false sampling grid
Tensor* upsample_bilinear(Tape& tape, Tensor* x, int factor);
Tensor* concat_channels(Tape& tape, const std::vector<Tensor*>& xs);
// inverted dropout: training mode scales survivors by 1/(1-rate) so the
// expected activation is unchanged; inference mode is the identity
Tensor* dropout(Tape& tape, Tensor* x, double rate, Rng& rng, bool training);
// per-pixel L2 normalization across channels; the norm is floored at epsilon
Tensor* l2_normalize_pixels(Tape& tape, Tensor* x, double epsilon = 1e-6);
Tensor* crop_spatial(Tape& tape, Tensor* x, int y0, int x0, int out_h, int out_w);
Tensor* reshape(Tape& tape, Tensor* x, std::vector<int> dims);
Tensor* softmax_channels(Tape& tape, Tensor* x);

}  // namespace pixelmap
