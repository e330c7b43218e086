#include "pixelmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pixelmap/errors.hpp"

namespace pixelmap {

double median_of(std::vector<double> values) {
  if (values.empty()) throw InputError("median_of: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size();
  return k % 2 ? values[k / 2] : 0.5 * (values[k / 2 - 1] + values[k / 2]);
}

LabelMap argmax_labels(const Tensor& scores) {
  if (scores.rank() != 4) {
    throw ConfigError("argmax_labels: need (n,K,h,w), got " + scores.shape_str());
  }
  const int B = scores.n(), K = scores.c(), H = scores.h(), W = scores.w();
  LabelMap out(B, H, W);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    const double* z = scores.data.data() + static_cast<std::size_t>(b) * K * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      double best_v = z[i];
      for (int c = 1; c < K; ++c) {
        if (z[c * plane + i] > best_v) {
          best_v = z[c * plane + i];
          best = c;
        }
      }
      out.v[b * plane + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

void DepthAccumulator::add(const Tensor& pred, const Tensor& target,
                           const Mask& mask) {
  if (pred.rank() != 4 || pred.c() != 1 || !same_dims(pred, target)) {
    throw ConfigError("DepthAccumulator: prediction " + pred.shape_str() +
                      " and target " + target.shape_str() + " must match (n,1,h,w)");
  }
  if (mask.n != pred.n() || mask.h != pred.h() || mask.w != pred.w()) {
    throw ConfigError("DepthAccumulator: mask size mismatch");
  }
  constexpr double thr1 = 1.25, thr2 = 1.25 * 1.25, thr3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (!mask.v[i]) continue;
    const double p = pred.data[i], t = target.data[i];
    if (!(p > 0.0) || !(t > 0.0)) {
      throw InputError("DepthAccumulator: nonpositive depth at valid pixel " +
                       std::to_string(i));
    }
    const double ratio = std::max(p / t, t / p);
    hit1_ += ratio < thr1 ? 1 : 0;
    hit2_ += ratio < thr2 ? 1 : 0;
    hit3_ += ratio < thr3 ? 1 : 0;
    abs_rel_ += std::abs(p - t) / t;
    sqr_rel_ += (p - t) * (p - t) / t;
    sq_ += (p - t) * (p - t);
    const double d = std::log(p) - std::log(t);
    log_sq_ += d * d;
    log_sum_ += d;
    n_ += 1;
  }
}

DepthMetrics DepthAccumulator::result() const {
  if (n_ == 0) throw InputError("DepthAccumulator: no valid pixels accumulated");
  DepthMetrics m;
  m.delta1 = hit1_ / n_;
  m.delta2 = hit2_ / n_;
  m.delta3 = hit3_ / n_;
  m.abs_rel = abs_rel_ / n_;
  m.sqr_rel = sqr_rel_ / n_;
  m.rms_lin = std::sqrt(sq_ / n_);
  m.rms_log = std::sqrt(log_sq_ / n_);
  m.scale_inv = log_sq_ / n_ - (log_sum_ * log_sum_) / (n_ * n_);
  return m;
}

void NormalsAccumulator::add(const Tensor& pred, const Tensor& target,
                             const Mask& mask) {
  if (pred.rank() != 4 || pred.c() != 3 || !same_dims(pred, target)) {
    throw ConfigError("NormalsAccumulator: prediction " + pred.shape_str() +
                      " and target " + target.shape_str() + " must match (n,3,h,w)");
  }
  if (mask.n != pred.n() || mask.h != pred.h() || mask.w != pred.w()) {
    throw ConfigError("NormalsAccumulator: mask size mismatch");
  }
  const int B = pred.n(), H = pred.h(), W = pred.w();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    const double* p = pred.data.data() + static_cast<std::size_t>(b) * 3 * plane;
    const double* t = target.data.data() + static_cast<std::size_t>(b) * 3 * plane;
    const std::uint8_t* m = mask.v.data() + b * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m[i]) continue;
      double dot = 0, np = 0, nt = 0;
      for (int c = 0; c < 3; ++c) {
        const double a = p[c * plane + i], g = t[c * plane + i];
        dot += a * g;
        np += a * a;
        nt += g * g;
      }
      dot /= std::max(std::sqrt(np) * std::sqrt(nt), 1e-12);
      degrees_.push_back(std::acos(std::clamp(dot, -1.0, 1.0)) * 180.0 /
                         std::numbers::pi);
    }
  }
}

NormalsMetrics NormalsAccumulator::result() const {
  if (degrees_.empty()) {
    throw InputError("NormalsAccumulator: no valid pixels accumulated");
  }
  NormalsMetrics m;
  double sum = 0, w11 = 0, w22 = 0, w30 = 0;
  for (double d : degrees_) {
    sum += d;
    w11 += d <= 11.25 ? 1 : 0;
    w22 += d <= 22.5 ? 1 : 0;
    w30 += d <= 30.0 ? 1 : 0;
  }
  const double n = static_cast<double>(degrees_.size());
  m.mean_deg = sum / n;
  m.median_deg = median_of(degrees_);
  m.within_11 = w11 / n;
  m.within_22 = w22 / n;
  m.within_30 = w30 / n;
  return m;
}

SegAccumulator::SegAccumulator(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("SegAccumulator: need at least 2 classes");
  confusion_.assign(static_cast<std::size_t>(num_classes) * num_classes, 0.0);
}

void SegAccumulator::add(const LabelMap& pred, const LabelMap& gt, const Mask& mask) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w || mask.n != gt.n ||
      mask.h != gt.h || mask.w != gt.w) {
    throw ConfigError("SegAccumulator: prediction/gt/mask size mismatch");
  }
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    if (!mask.v[i]) continue;
    const int g = gt.v[i], p = pred.v[i];
    if (g >= num_classes_ || p >= num_classes_) {
      throw InputError("SegAccumulator: label " + std::to_string(std::max(g, p)) +
                       " out of range for " + std::to_string(num_classes_) +
                       " classes");
    }
    confusion_[static_cast<std::size_t>(g) * num_classes_ + p] += 1;
  }
}

SegMetrics SegAccumulator::result() const {
  const int K = num_classes_;
  double total = 0, diag = 0;
  std::vector<double> gt_count(K, 0.0), pred_count(K, 0.0);
  for (int g = 0; g < K; ++g) {
    for (int p = 0; p < K; ++p) {
      const double v = confusion_[static_cast<std::size_t>(g) * K + p];
      total += v;
      gt_count[g] += v;
      pred_count[p] += v;
      if (g == p) diag += v;
    }
  }
  if (total == 0) throw InputError("SegAccumulator: no valid pixels accumulated");

  SegMetrics m;
  m.pixel_acc = diag / total;
  m.class_acc.assign(K, 0.0);
  m.jaccard.assign(K, 0.0);
  double acc_sum = 0, jac_sum = 0, fw = 0, present = 0;
  for (int c = 0; c < K; ++c) {
    const double tp = confusion_[static_cast<std::size_t>(c) * K + c];
    const double uni = gt_count[c] + pred_count[c] - tp;
    if (uni > 0) m.jaccard[c] = tp / uni;
    if (gt_count[c] > 0) {
      m.class_acc[c] = tp / gt_count[c];
      acc_sum += m.class_acc[c];
      jac_sum += m.jaccard[c];
      fw += (gt_count[c] / total) * m.jaccard[c];
      present += 1;
    }
  }
  if (present == 0) throw InputError("SegAccumulator: no class present in gt");
  m.mean_class_acc = acc_sum / present;
  m.mean_jaccard = jac_sum / present;
  m.freq_weighted_jaccard = fw;
  return m;
}

}  // namespace pixelmap
