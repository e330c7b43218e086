#include "pixelmap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pixelmap/rng.hpp"
#include "pixelmap/tape.hpp"

namespace pixelmap {

GradCheckReport gradcheck(const std::string& label,
                          const std::function<double(const Tensor&)>& f,
                          const Tensor& analytic_grad, const Tensor& x0,
                          double h, double tol) {
  GradCheckReport rep;
  rep.label = label;
  rep.tol = tol;
  if (analytic_grad.numel() != x0.numel()) {
    rep.error = "analytic gradient size mismatch";
    return rep;
  }

  Tensor x = x0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double fp = f(x);
    x.data[i] = keep - h;
    const double fm = f(x);
    x.data[i] = keep;

    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad.data[i];
    if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
      rep.error = "non-finite gradient at element " + std::to_string(i);
      return rep;
    }
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    const double rel = std::fabs(analytic - numeric) / denom;
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    if (rel > tol) rep.flagged.push_back({i, analytic, numeric, rel});
    ++rep.checked;
  }
  rep.passed = rep.flagged.empty();
  return rep;
}

GradCheckReport check_op_gradient(const std::string& label,
                                  const std::function<Tensor*(Tape&)>& fwd,
                                  Tensor& target, std::uint64_t cot_seed,
                                  double h, double tol) {
  // analytic pass: seed the output gradient with the cotangent and replay
  Tape tape(true);
  Tensor* y = fwd(tape);
  Rng rng(cot_seed);
  Tensor cot(y->dims);
  for (auto& v : cot.data) v = rng.uniform(-1.0, 1.0);

  target.ensure_grad();
  target.zero_grad();
  y->ensure_grad();
  y->grad = cot.data;
  tape.backward();

  Tensor analytic(target.dims);
  analytic.data = target.grad;
  target.zero_grad();

  const Tensor x0 = target;
  auto f = [&fwd, &target, &cot](const Tensor& x) {
    const std::vector<double> saved = target.data;
    target.data = x.data;
    Tape t(false);
    Tensor* out = fwd(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < out->numel(); ++i) acc += out->data[i] * cot.data[i];
    target.data = saved;
    return acc;
  };
  return gradcheck(label, f, analytic, x0, h, tol);
}

}  // namespace pixelmap
