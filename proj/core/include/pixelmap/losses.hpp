#pragma once

#include <vector>

#include "pixelmap/sample.hpp"
#include "pixelmap/tape.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// Per-class loss weights from median-frequency balancing. Classes absent
// from the data get weight 0 and are listed in `absent`.
struct ClassWeights {
  std::vector<double> alpha;
  std::vector<int> absent;
};

// All losses run per image with n = that image's valid pixel count, then
// average over the batch. They record the gradient with respect to the
// prediction on the tape as a root injection (no upstream gradient needed).
// An image with an empty mask is an InputError.

// Scale-invariant log-depth loss with a first-order smoothness match:
//   (1/n) sum d^2 - (1/2n^2) (sum d)^2 + (1/n) sum [(dx d)^2 + (dy d)^2]
// where d = pred - log(target) and the finite differences are forward pairs
// counted only when both pixels are valid. pred is log depth, target is
// metric depth (positive at every valid pixel).
double depth_loss(Tape& tape, Tensor* pred, const Tensor& target, const Mask& mask);

// Negative mean dot product, -(1/n) sum pred . target. pred must already be
// unit length per pixel (the model normalizes); target is unit length.
double normals_loss(Tape& tape, Tensor* pred, const Tensor& target, const Mask& mask);

// Pixelwise softmax cross-entropy over raw scores (C = classes), stabilized
// by max subtraction. With weights, each pixel's term is multiplied by
// alpha[label]; the normalizer stays n, not the weight sum.
double semantic_loss(Tape& tape, Tensor* scores, const LabelMap& labels,
                     const Mask& mask, const ClassWeights* weights = nullptr);

// freq(c) = pixels of class c / total valid pixels in images where c occurs;
// alpha_c = median(present freqs) / freq(c).
ClassWeights median_freq_weights(const std::vector<const LabelMap*>& labels,
                                 const std::vector<const Mask*>& masks,
                                 int num_classes);

}  // namespace pixelmap
