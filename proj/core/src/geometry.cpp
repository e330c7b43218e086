#include "pixelmap/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace {

void check_depth(const Tensor& depth, const char* who) {
  if (depth.rank() != 4 || depth.c() != 1) {
    throw ConfigError(std::string(who) + ": depth must be (n,1,h,w), got " +
                      depth.shape_str());
  }
}

void check_mask(const Tensor& depth, const Mask& mask, const char* who) {
  if (mask.n != depth.n() || mask.h != depth.h() || mask.w != depth.w()) {
    throw ConfigError(std::string(who) + ": mask size mismatch for " +
                      depth.shape_str());
  }
}

// Orient n toward the camera: the ray through p must hit the front face.
void face_camera(double n[3], const double p[3]) {
  const double dot = n[0] * p[0] + n[1] * p[1] + n[2] * p[2];
  if (dot > 0.0 || (dot == 0.0 && n[2] > 0.0)) {
    n[0] = -n[0];
    n[1] = -n[1];
    n[2] = -n[2];
  }
}

}  // namespace

Eig3 eig_sym3(const std::array<std::array<double, 3>, 3>& input) {
  double a[3][3];
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = input[i][j];

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    double diag = std::abs(a[0][0]) + std::abs(a[1][1]) + std::abs(a[2][2]);
    if (off <= 1e-15 * std::max(diag, 1e-300)) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
        a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a[p][q] = a[q][p] = 0.0;
        const int r = 3 - p - q;  // the remaining index
        const double arp = a[r][p], arq = a[r][q];
        a[r][p] = a[p][r] = c * arp - s * arq;
        a[r][q] = a[q][r] = s * arp + c * arq;
        for (int i = 0; i < 3; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }

  int order[3] = {0, 1, 2};
  std::sort(order, order + 3,
            [&](int i, int j) { return a[i][i] < a[j][j]; });
  Eig3 out;
  for (int k = 0; k < 3; ++k) {
    out.val[k] = a[order[k]][order[k]];
    for (int i = 0; i < 3; ++i) out.vec[k][i] = v[i][order[k]];
  }
  return out;
}

Tensor depth_to_points(const Tensor& depth, const Intrinsics& k) {
  check_depth(depth, "depth_to_points");
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
    throw ConfigError("depth_to_points: focal lengths must be positive");
  }
  const int B = depth.n(), H = depth.h(), W = depth.w();
  Tensor pts({B, 3, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    const double* z = depth.data.data() + b * plane;
    double* px = pts.data.data() + static_cast<std::size_t>(b) * 3 * plane;
    double* py = px + plane;
    double* pz = py + plane;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        px[i] = (x - k.cx) * z[i] / k.fx;
        py[i] = (y - k.cy) * z[i] / k.fy;
        pz[i] = z[i];
      }
    }
  }
  return pts;
}

NormalMap normals_from_depth_planefit(const Tensor& depth, const Mask& mask,
                                      const Intrinsics& k, int window) {
  check_depth(depth, "normals_from_depth_planefit");
  check_mask(depth, mask, "normals_from_depth_planefit");
  if (window < 3 || window % 2 == 0) {
    throw ConfigError("normals_from_depth_planefit: window must be odd and >= 3, got " +
                      std::to_string(window));
  }
  const int B = depth.n(), H = depth.h(), W = depth.w();
  const int r = window / 2;
  const Tensor pts = depth_to_points(depth, k);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  NormalMap out{Tensor::zeros({B, 3, H, W}), Mask(B, H, W, 0)};
  for (int b = 0; b < B; ++b) {
    const std::uint8_t* m = mask.v.data() + b * plane;
    const double* px = pts.data.data() + static_cast<std::size_t>(b) * 3 * plane;
    const double* py = px + plane;
    const double* pz = py + plane;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t ci = static_cast<std::size_t>(y) * W + x;
        if (!m[ci]) continue;

        // two passes: centroid first, then centered second moments — the
        // single-pass E[x^2]-E[x]^2 form cancels catastrophically when the
        // window's spatial spread is small relative to the depth magnitude
        double sx = 0, sy = 0, sz = 0;
        int count = 0;
        const int y0 = std::max(0, y - r), y1 = std::min(H - 1, y + r);
        const int x0 = std::max(0, x - r), x1 = std::min(W - 1, x + r);
        for (int wy = y0; wy <= y1; ++wy) {
          for (int wx = x0; wx <= x1; ++wx) {
            const std::size_t i = static_cast<std::size_t>(wy) * W + wx;
            if (!m[i]) continue;
            sx += px[i];
            sy += py[i];
            sz += pz[i];
            ++count;
          }
        }
        if (count < 3) continue;

        const double mx = sx / count, my = sy / count, mz = sz / count;
        std::array<std::array<double, 3>, 3> cov{};
        for (int wy = y0; wy <= y1; ++wy) {
          for (int wx = x0; wx <= x1; ++wx) {
            const std::size_t i = static_cast<std::size_t>(wy) * W + wx;
            if (!m[i]) continue;
            const double dx = px[i] - mx, dy = py[i] - my, dz = pz[i] - mz;
            cov[0][0] += dx * dx;
            cov[0][1] += dx * dy;
            cov[0][2] += dx * dz;
            cov[1][1] += dy * dy;
            cov[1][2] += dy * dz;
            cov[2][2] += dz * dz;
          }
        }
        cov[1][0] = cov[0][1];
        cov[2][0] = cov[0][2];
        cov[2][1] = cov[1][2];

        const Eig3 e = eig_sym3(cov);
        // collinear support: middle eigenvalue vanishes relative to largest
        if (e.val[1] <= 1e-12 * std::max(e.val[2], 1e-300)) continue;

        double n[3] = {e.vec[0][0], e.vec[0][1], e.vec[0][2]};
        const double p[3] = {px[ci], py[ci], pz[ci]};
        face_camera(n, p);
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 0) * plane + ci] = n[0];
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 1) * plane + ci] = n[1];
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 2) * plane + ci] = n[2];
        out.valid.v[b * plane + ci] = 1;
      }
    }
  }
  return out;
}

NormalMap normals_from_depth_finitediff(const Tensor& depth, const Mask& mask,
                                        const Intrinsics& k) {
  check_depth(depth, "normals_from_depth_finitediff");
  check_mask(depth, mask, "normals_from_depth_finitediff");
  const int B = depth.n(), H = depth.h(), W = depth.w();
  const Tensor pts = depth_to_points(depth, k);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  NormalMap out{Tensor::zeros({B, 3, H, W}), Mask(B, H, W, 0)};
  for (int b = 0; b < B; ++b) {
    const std::uint8_t* m = mask.v.data() + b * plane;
    const double* px = pts.data.data() + static_cast<std::size_t>(b) * 3 * plane;
    const double* py = px + plane;
    const double* pz = py + plane;
    for (int y = 1; y < H - 1; ++y) {
      for (int x = 1; x < W - 1; ++x) {
        const std::size_t ci = static_cast<std::size_t>(y) * W + x;
        if (!m[ci] || !m[ci - 1] || !m[ci + 1] || !m[ci - W] || !m[ci + W]) continue;
        const double tu[3] = {px[ci + 1] - px[ci - 1], py[ci + 1] - py[ci - 1],
                              pz[ci + 1] - pz[ci - 1]};
        const double tv[3] = {px[ci + W] - px[ci - W], py[ci + W] - py[ci - W],
                              pz[ci + W] - pz[ci - W]};
        double n[3] = {tu[1] * tv[2] - tu[2] * tv[1],
                       tu[2] * tv[0] - tu[0] * tv[2],
                       tu[0] * tv[1] - tu[1] * tv[0]};
        const double norm = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (norm < 1e-12) continue;
        for (double& c : n) c /= norm;
        const double p[3] = {px[ci], py[ci], pz[ci]};
        face_camera(n, p);
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 0) * plane + ci] = n[0];
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 1) * plane + ci] = n[1];
        out.vectors.data[(static_cast<std::size_t>(b) * 3 + 2) * plane + ci] = n[2];
        out.valid.v[b * plane + ci] = 1;
      }
    }
  }
  return out;
}

}  // namespace pixelmap
