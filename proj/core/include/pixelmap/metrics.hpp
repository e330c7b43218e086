// Evaluation metrics for the three pixel-map tasks. Each accumulator pools
// statistics over every valid pixel it is fed (micro-averaging across the
// whole dataset), and result() evaluates the final figures.
#pragma once

#include <vector>

#include "pixelmap/sample.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// Median as the average of the two middle elements for even counts.
// Throws InputError when empty.
double median_of(std::vector<double> values);

// Per-pixel argmax over channels of a (n,K,h,w) score map; ties go to the
// lowest channel index.
LabelMap argmax_labels(const Tensor& scores);

struct DepthMetrics {
  double delta1 = 0;     // fraction with max(p/t, t/p) < 1.25
  double delta2 = 0;     // ... < 1.25^2
  double delta3 = 0;     // ... < 1.25^3
  double abs_rel = 0;    // mean |p - t| / t
  double sqr_rel = 0;    // mean (p - t)^2 / t
  double rms_lin = 0;    // sqrt(mean (p - t)^2)
  double rms_log = 0;    // sqrt(mean (log p - log t)^2)
  double scale_inv = 0;  // mean d^2 - (mean d)^2, d = log p - log t
};

// Feeds on metric depths (not log). Both prediction and target must be
// strictly positive at valid pixels; violations raise InputError.
class DepthAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& target, const Mask& mask);
  DepthMetrics result() const;  // InputError if no pixels were added

 private:
  double n_ = 0;
  double hit1_ = 0, hit2_ = 0, hit3_ = 0;
  double abs_rel_ = 0, sqr_rel_ = 0, sq_ = 0;
  double log_sq_ = 0, log_sum_ = 0;
};

struct NormalsMetrics {
  double mean_deg = 0;
  double median_deg = 0;
  double within_11 = 0;  // fraction of angles <= 11.25 degrees
  double within_22 = 0;  // ... <= 22.5
  double within_30 = 0;  // ... <= 30
};

// Angles between per-pixel 3-vectors; inputs are normalized internally so
// callers may pass raw (unnormalized) predictions.
class NormalsAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& target, const Mask& mask);
  NormalsMetrics result() const;  // InputError if no pixels were added

 private:
  std::vector<double> degrees_;
};

struct SegMetrics {
  double pixel_acc = 0;
  double mean_class_acc = 0;          // mean recall over classes present in gt
  double mean_jaccard = 0;            // mean over classes present in gt
  double freq_weighted_jaccard = 0;   // weighted by gt class frequency
  std::vector<double> class_acc;      // per class; 0 when absent from gt
  std::vector<double> jaccard;        // per class; 0 when undefined
};

class SegAccumulator {
 public:
  explicit SegAccumulator(int num_classes);
  void add(const LabelMap& pred, const LabelMap& gt, const Mask& mask);
  SegMetrics result() const;  // InputError if no pixels were added

 private:
  int num_classes_;
  std::vector<double> confusion_;  // [gt * K + pred]
};

}  // namespace pixelmap
