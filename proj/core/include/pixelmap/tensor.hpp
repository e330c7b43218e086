#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pixelmap {

// Dense row-major tensor of doubles, rank 1..4. Rank-4 data is laid out as
// (batch, channels, height, width). The gradient buffer is empty until
// ensure_grad() and always matches data in size once allocated.
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> d);

  static Tensor zeros(std::vector<int> d) { return Tensor(std::move(d)); }
  static Tensor full(std::vector<int> d, double v);

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }

  // rank-4 accessors; missing leading dims read as 1
  int n() const { return dim4(0); }
  int c() const { return dim4(1); }
  int h() const { return dim4(2); }
  int w() const { return dim4(3); }
  int dim4(int i) const;

  double& at(int n, int c, int y, int x) { return data[offset(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data[offset(n, c, y, x)]; }
  double& gat(int n, int c, int y, int x) { return grad[offset(n, c, y, x)]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * dim4(1) + c) * dim4(2) + y) * dim4(3) + x;
  }
};

bool same_dims(const Tensor& a, const Tensor& b);

}  // namespace pixelmap
