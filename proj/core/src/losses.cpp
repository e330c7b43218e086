#include "pixelmap/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace {

void check_pair(const Tensor& pred, int channels, const Mask& mask, const char* who) {
  if (pred.rank() != 4 || pred.c() != channels) {
    throw ConfigError(std::string(who) + ": prediction must be (n," +
                      std::to_string(channels) + ",h,w), got " + pred.shape_str());
  }
  if (mask.n != pred.n() || mask.h != pred.h() || mask.w != pred.w()) {
    throw ConfigError(std::string(who) + ": mask size mismatch for " + pred.shape_str());
  }
}

std::size_t valid_count(const Mask& mask, int b, const char* who) {
  std::size_t n = 0;
  const std::size_t plane = static_cast<std::size_t>(mask.h) * mask.w;
  for (std::size_t i = 0; i < plane; ++i) n += mask.v[b * plane + i] ? 1 : 0;
  if (n == 0) {
    throw InputError(std::string(who) + ": image " + std::to_string(b) +
                     " has an empty valid mask");
  }
  return n;
}

}  // namespace

double depth_loss(Tape& tape, Tensor* pred, const Tensor& target, const Mask& mask) {
  check_pair(*pred, 1, mask, "depth_loss");
  if (!same_dims(*pred, target)) {
    throw ConfigError("depth_loss: target shape " + target.shape_str() +
                      " != prediction " + pred->shape_str());
  }
  const int B = pred->n(), H = pred->h(), W = pred->w();
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  // d holds pred - log(target) at valid pixels, 0 elsewhere
  std::vector<double> d(pred->numel(), 0.0);
  std::vector<double> dLdd(pred->numel(), 0.0);
  double total = 0.0;

  for (int b = 0; b < B; ++b) {
    const double n = static_cast<double>(valid_count(mask, b, "depth_loss"));
    const std::uint8_t* m = mask.v.data() + b * plane;
    const double* p = pred->data.data() + b * plane;
    const double* t = target.data.data() + b * plane;
    double* db = d.data() + b * plane;

    double sum_d = 0.0, sum_d2 = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m[i]) continue;
      if (!(t[i] > 0.0)) {
        throw InputError("depth_loss: nonpositive target depth at valid pixel " +
                         std::to_string(i) + " of image " + std::to_string(b));
      }
      db[i] = p[i] - std::log(t[i]);
      sum_d += db[i];
      sum_d2 += db[i] * db[i];
    }

    double* g = dLdd.data() + b * plane;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (!m[i]) continue;
        // forward differences; a pair contributes only when both ends valid
        if (x + 1 < W && m[i + 1]) {
          const double diff = db[i + 1] - db[i];
          sum_g += diff * diff;
          g[i + 1] += 2.0 * diff / n;
          g[i] -= 2.0 * diff / n;
        }
        if (y + 1 < H && m[i + W]) {
          const double diff = db[i + W] - db[i];
          sum_g += diff * diff;
          g[i + W] += 2.0 * diff / n;
          g[i] -= 2.0 * diff / n;
        }
      }
    }

    total += sum_d2 / n - (sum_d * sum_d) / (2.0 * n * n) + sum_g / n;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m[i]) continue;
      g[i] += 2.0 * db[i] / n - sum_d / (n * n);
    }
  }

  tape.record([pred, dLdd = std::move(dLdd), B]() {
    pred->ensure_grad();
    for (std::size_t i = 0; i < pred->numel(); ++i) {
      pred->grad[i] += dLdd[i] / B;
    }
  });
  return total / B;
}

double normals_loss(Tape& tape, Tensor* pred, const Tensor& target, const Mask& mask) {
  check_pair(*pred, 3, mask, "normals_loss");
  if (!same_dims(*pred, target)) {
    throw ConfigError("normals_loss: target shape " + target.shape_str() +
                      " != prediction " + pred->shape_str());
  }
  const int B = pred->n(), H = pred->h(), W = pred->w();
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  double total = 0.0;
  std::vector<double> dLdp(pred->numel(), 0.0);
  for (int b = 0; b < B; ++b) {
    const double n = static_cast<double>(valid_count(mask, b, "normals_loss"));
    const std::uint8_t* m = mask.v.data() + b * plane;
    double dot = 0.0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!m[i]) continue;
        dot += pred->data[base + i] * target.data[base + i];
        dLdp[base + i] = -target.data[base + i] / (n * B);
      }
    }
    total += -dot / n;
  }

  tape.record([pred, dLdp = std::move(dLdp)]() {
    pred->ensure_grad();
    for (std::size_t i = 0; i < pred->numel(); ++i) pred->grad[i] += dLdp[i];
  });
  return total / B;
}

double semantic_loss(Tape& tape, Tensor* scores, const LabelMap& labels,
                     const Mask& mask, const ClassWeights* weights) {
  const int B = scores->n(), K = scores->c(), H = scores->h(), W = scores->w();
  if (scores->rank() != 4 || K < 2) {
    throw ConfigError("semantic_loss: scores must be (n,K>=2,h,w), got " +
                      scores->shape_str());
  }
  if (mask.n != B || mask.h != H || mask.w != W || labels.n != B || labels.h != H ||
      labels.w != W) {
    throw ConfigError("semantic_loss: labels/mask size mismatch for " +
                      scores->shape_str());
  }
  if (weights && static_cast<int>(weights->alpha.size()) != K) {
    throw ConfigError("semantic_loss: weight vector has " +
                      std::to_string(weights->alpha.size()) + " entries, classes = " +
                      std::to_string(K));
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  double total = 0.0;
  std::vector<double> dLdz(scores->numel(), 0.0);
  std::vector<double> prob(K);
  for (int b = 0; b < B; ++b) {
    const double n = static_cast<double>(valid_count(mask, b, "semantic_loss"));
    const std::uint8_t* m = mask.v.data() + b * plane;
    const std::uint8_t* lab = labels.v.data() + b * plane;
    const double* z = scores->data.data() + static_cast<std::size_t>(b) * K * plane;
    double* g = dLdz.data() + static_cast<std::size_t>(b) * K * plane;

    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m[i]) continue;
      const int t = lab[i];
      if (t >= K) {
        throw InputError("semantic_loss: label " + std::to_string(t) +
                         " out of range for " + std::to_string(K) + " classes at pixel " +
                         std::to_string(i) + " of image " + std::to_string(b));
      }
      double zmax = z[i];
      for (int c = 1; c < K; ++c) zmax = std::max(zmax, z[c * plane + i]);
      double sum = 0.0;
      for (int c = 0; c < K; ++c) {
        prob[c] = std::exp(z[c * plane + i] - zmax);
        sum += prob[c];
      }
      const double log_sum = std::log(sum);
      const double alpha = weights ? weights->alpha[t] : 1.0;
      acc += alpha * (log_sum - (z[t * plane + i] - zmax));
      const double scale = alpha / (n * B);
      for (int c = 0; c < K; ++c) {
        g[c * plane + i] += scale * (prob[c] / sum - (c == t ? 1.0 : 0.0));
      }
    }
    total += acc / n;
  }

  tape.record([scores, dLdz = std::move(dLdz)]() {
    scores->ensure_grad();
    for (std::size_t i = 0; i < scores->numel(); ++i) scores->grad[i] += dLdz[i];
  });
  return total / B;
}

ClassWeights median_freq_weights(const std::vector<const LabelMap*>& labels,
                                 const std::vector<const Mask*>& masks,
                                 int num_classes) {
  if (labels.size() != masks.size() || labels.empty()) {
    throw ConfigError("median_freq_weights: need matching label/mask lists");
  }
  if (num_classes < 1) throw ConfigError("median_freq_weights: num_classes < 1");

  std::vector<double> class_pixels(num_classes, 0.0);
  std::vector<double> denom(num_classes, 0.0);  // valid pixels in images containing c
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const LabelMap& l = *labels[s];
    const Mask& m = *masks[s];
    if (l.n != m.n || l.h != m.h || l.w != m.w) {
      throw ConfigError("median_freq_weights: label/mask size mismatch at sample " +
                        std::to_string(s));
    }
    for (int b = 0; b < l.n; ++b) {
      std::vector<double> count(num_classes, 0.0);
      double valid = 0.0;
      const std::size_t plane = static_cast<std::size_t>(l.h) * l.w;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!m.v[b * plane + i]) continue;
        const int c = l.v[b * plane + i];
        if (c >= num_classes) {
          throw InputError("median_freq_weights: label " + std::to_string(c) +
                           " out of range for " + std::to_string(num_classes) +
                           " classes");
        }
        count[c] += 1.0;
        valid += 1.0;
      }
      for (int c = 0; c < num_classes; ++c) {
        if (count[c] > 0.0) {
          class_pixels[c] += count[c];
          denom[c] += valid;
        }
      }
    }
  }

  std::vector<double> freqs;
  ClassWeights out;
  out.alpha.assign(num_classes, 0.0);
  for (int c = 0; c < num_classes; ++c) {
    if (class_pixels[c] > 0.0) {
      freqs.push_back(class_pixels[c] / denom[c]);
    } else {
      out.absent.push_back(c);
    }
  }
  if (freqs.empty()) throw InputError("median_freq_weights: no class has any pixels");

  std::sort(freqs.begin(), freqs.end());
  const std::size_t k = freqs.size();
  const double median =
      k % 2 ? freqs[k / 2] : 0.5 * (freqs[k / 2 - 1] + freqs[k / 2]);
  for (int c = 0; c < num_classes; ++c) {
    if (class_pixels[c] > 0.0) out.alpha[c] = median / (class_pixels[c] / denom[c]);
  }
  return out;
}

}  // namespace pixelmap
