#include "pixelmap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "pixelmap/errors.hpp"

namespace pixelmap {

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)) {
  if (dims.empty() || dims.size() > 4) {
    throw ConfigError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  std::size_t n = 1;
  for (int s : dims) {
    if (s <= 0) throw ConfigError("tensor dims must be positive, got " + shape_str());
    n *= static_cast<std::size_t>(s);
  }
  data.assign(n, 0.0);
}

Tensor Tensor::full(std::vector<int> d, double v) {
  Tensor t(std::move(d));
  for (auto& x : t.data) x = v;
  return t;
}

int Tensor::dim4(int i) const {
  int pad = 4 - rank();
  return i < pad ? 1 : dims[i - pad];
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ")";
  return os.str();
}

bool same_dims(const Tensor& a, const Tensor& b) { return a.dims == b.dims; }

}  // namespace pixelmap
