// Camera-space geometry: pinhole back-projection, total-least-squares
// plane-fit normals, and a finite-difference normal estimator used as a
// diagnostic. Convention: +z into the scene, v-axis down, u = column index;
// emitted normals are unit length and face the camera (n . p < 0).
#pragma once

#include <array>

#include "pixelmap/sample.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// Eigen-decomposition of a symmetric 3x3 matrix (cyclic Jacobi rotations).
// Eigenvalues ascending; vec[k] is the unit eigenvector for val[k].
struct Eig3 {
  std::array<double, 3> val;
  std::array<std::array<double, 3>, 3> vec;
};
Eig3 eig_sym3(const std::array<std::array<double, 3>, 3>& a);

// (n,1,h,w) metric depth -> (n,3,h,w) camera-space points:
// p = ((u-cx) Z/fx, (v-cy) Z/fy, Z). Computed for every pixel; validity is
// the caller's mask.
Tensor depth_to_points(const Tensor& depth, const Intrinsics& k);

struct NormalMap {
  Tensor vectors;  // (n,3,h,w); zeros at invalid pixels
  Mask valid;
};

// Per pixel, fits a total-least-squares plane (smallest eigenvector of the
// centered covariance) over the valid points inside the centered
// window x window neighborhood. A pixel is invalid when its own depth is
// masked out, fewer than 3 points support the fit, or the covariance is
// degenerate (collinear points). window must be odd and >= 3.
NormalMap normals_from_depth_planefit(const Tensor& depth, const Mask& mask,
                                      const Intrinsics& k, int window = 7);

// Normal = normalized cross product of central-difference tangents of the
// point map. Pixels without all four valid in-bounds neighbors are invalid.
NormalMap normals_from_depth_finitediff(const Tensor& depth, const Mask& mask,
                                        const Intrinsics& k);

}  // namespace pixelmap
