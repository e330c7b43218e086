#include "pixelmap/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pixelmap/losses.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/ops.hpp"
#include "pixelmap/rng.hpp"
#include "pixelmap/tape.hpp"

namespace pixelmap {

namespace {

constexpr double kOpTol = 1e-6;
constexpr double kComposedTol = 1e-4;

void fill(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = rng.uniform(lo, hi);
}

// Evenly spaced values in random order: neighbors in the pool window differ
// by far more than the difference step, so the argmax never flips.
void fill_separated(Tensor& t, Rng& rng) {
  const std::size_t n = t.data.size();
  for (std::size_t i = 0; i < n; ++i)
    t.data[i] = -1.0 + (2.0 * (static_cast<double>(i) + 0.5)) /
                           static_cast<double>(n);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(t.data[i - 1], t.data[j]);
  }
}

// Push every entry at least 0.05 from zero so the two-sided quotient never
// straddles the relu branch.
void fill_off_kink(Tensor& t, Rng& rng) {
  for (auto& v : t.data) {
    v = rng.uniform(-1.0, 1.0);
    if (std::fabs(v) < 0.05) v = (v < 0.0 ? -1.0 : 1.0) * (0.05 + std::fabs(v));
  }
}

ModelConfig tiny_config(Task task, int num_classes) {
  ModelConfig cfg;
  cfg.input_w = 8;
  cfg.input_h = 6;
  cfg.task = task;
  cfg.num_classes = num_classes;
  cfg.width_multiplier = 1.0 / 16.0;
  cfg.coarse_stack = tiny_stack();
  cfg.fc6_units = 32;
  return cfg;
}

struct Suite {
  const SuiteOptions& opts;
  std::vector<GradCheckReport> reports;
  std::uint64_t next_cot = 1000;

  void op(const std::string& label, const std::function<Tensor*(Tape&)>& fwd,
          Tensor& target) {
    reports.push_back(
        check_op_gradient(label, fwd, target, next_cot++, opts.h, kOpTol));
  }

  void primitives() {
    Rng rng(opts.seed);
    {
      Tensor x({2, 3, 7, 6});
      fill(x, rng);
      ConvSpec spec = make_conv("gc", 3, 4, 3, 2, 1, rng);
      fill(spec.b, rng, -0.5, 0.5);
      auto fwd = [&](Tape& t) { return conv2d(t, &x, spec); };
      op("conv2d(3x3,s2,p1)/input", fwd, x);
      op("conv2d(3x3,s2,p1)/weights", fwd, spec.w);
      op("conv2d(3x3,s2,p1)/bias", fwd, spec.b);
    }
    {
      Tensor x({1, 2, 9, 9});
      fill(x, rng);
      ConvSpec spec = make_conv("gc2", 2, 3, 5, 1, 2, rng);
      fill(spec.b, rng, -0.5, 0.5);
      auto fwd = [&](Tape& t) { return conv2d(t, &x, spec); };
      op("conv2d(5x5,same)/input", fwd, x);
      op("conv2d(5x5,same)/weights", fwd, spec.w);
      op("conv2d(5x5,same)/bias", fwd, spec.b);
    }
    {
      Tensor x({2, 2, 8, 8});
      fill_separated(x, rng);
      auto fwd = [&](Tape& t) { return maxpool(t, &x, 2, 2); };
      op("maxpool(2x2,s2)/input", fwd, x);
    }
    {
      Tensor x({1, 3, 9, 7});
      fill_separated(x, rng);
      auto fwd = [&](Tape& t) { return maxpool(t, &x, 3, 2); };
      op("maxpool(3x3,s2)/input", fwd, x);
    }
    {
      Tensor x({1, 2, 9, 8});
      fill_separated(x, rng);
      auto fwd = [&](Tape& t) { return maxpool_rect(t, &x, 3, 2, 2); };
      op("maxpool_rect(3x2,s2)/input", fwd, x);
    }
    {
      Tensor x({2, 5, 1, 1});
      fill(x, rng);
      LinearSpec fc = make_linear("gfc", 5, 4, rng);
      fill(fc.b, rng, -0.5, 0.5);
      auto fwd = [&](Tape& t) { return linear(t, &x, fc); };
      op("linear/input", fwd, x);
      op("linear/weights", fwd, fc.w);
      op("linear/bias", fwd, fc.b);
    }
    {
      Tensor x({2, 3, 5, 4});
      fill_off_kink(x, rng);
      auto fwd = [&](Tape& t) { return relu(t, &x); };
      op("relu/input", fwd, x);
    }
    {
      Tensor x({1, 2, 4, 4});
      fill(x, rng);
      auto fwd = [&](Tape& t) { return upsample_bilinear(t, &x, 2); };
      op("upsample_bilinear(x2)/input", fwd, x);
    }
    {
      Tensor a({1, 2, 5, 4}), b({1, 3, 5, 4});
      fill(a, rng);
      fill(b, rng);
      auto fwd = [&](Tape& t) {
        return concat_channels(t, {&a, &b});
      };
      op("concat_channels/first", fwd, a);
      op("concat_channels/second", fwd, b);
    }
    {
      Tensor x({1, 4, 5, 5});
      fill(x, rng);
      // the mask must not move between evaluations, so the stream restarts
      // inside the closure
      auto fwd = [&](Tape& t) {
        Rng mask_rng(4242);
        return dropout(t, &x, 0.5, mask_rng, true);
      };
      op("dropout(0.5,fixed-mask)/input", fwd, x);
    }
    {
      Tensor x({1, 3, 4, 5});
      // keep every pixel vector well off the epsilon ball
      for (int y = 0; y < 4; ++y)
        for (int px = 0; px < 5; ++px) {
          double v[3], norm = 0.0;
          for (double& vi : v) vi = rng.uniform(-1.0, 1.0);
          norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
          const double boost = norm < 0.3 ? (0.3 + norm) / (norm + 1e-9) : 1.0;
          for (int c = 0; c < 3; ++c) x.at(0, c, y, px) = v[c] * boost;
        }
      auto fwd = [&](Tape& t) { return l2_normalize_pixels(t, &x); };
      op("l2_normalize_pixels/input", fwd, x);
    }
    {
      Tensor x({1, 2, 7, 8});
      fill(x, rng);
      auto fwd = [&](Tape& t) { return crop_spatial(t, &x, 2, 3, 4, 4); };
      op("crop_spatial/input", fwd, x);
    }
    {
      Tensor x({1, 3, 4, 2});
      fill(x, rng);
      auto fwd = [&](Tape& t) { return reshape(t, &x, {1, 24, 1, 1}); };
      op("reshape/input", fwd, x);
    }
    {
      Tensor x({1, 4, 3, 3});
      fill(x, rng);
      auto fwd = [&](Tape& t) { return softmax_channels(t, &x); };
      op("softmax_channels/input", fwd, x);
    }
  }

  // d(loss)/d(pred) against central differences; the losses inject their
  // gradient at the root, so one backward pass exposes it directly.
  void loss_fixture(const std::string& label,
                    const std::function<double(Tape&, Tensor*)>& run,
                    Tensor& pred) {
    pred.ensure_grad();
    pred.zero_grad();
    Tape tape(true);
    run(tape, &pred);
    tape.backward();
    Tensor analytic(pred.dims);
    analytic.data = pred.grad;

    auto f = [&](const Tensor& x) {
      Tensor px = x;
      Tape t(false);
      return run(t, &px);
    };
    reports.push_back(gradcheck(label, f, analytic, pred, opts.h, kOpTol));
  }

  void losses() {
    Rng rng(opts.seed + 1);
    {
      Tensor pred({1, 1, 5, 6}), target({1, 1, 5, 6});
      fill(pred, rng);
      for (auto& v : target.data) v = rng.uniform(0.5, 9.0);
      Mask mask(1, 5, 6);
      for (auto& m : mask.v) m = rng.bernoulli(0.75) ? 1 : 0;
      mask.at(0, 2, 2) = 1;
      loss_fixture("depth_loss/pred",
                   [&](Tape& t, Tensor* p) {
                     return depth_loss(t, p, target, mask);
                   },
                   pred);
    }
    {
      Tensor pred({1, 3, 4, 5}), target({1, 3, 4, 5});
      fill(pred, rng);
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) {
          double v[3], n = 0.0;
          for (double& vi : v) vi = rng.normal(0.0, 1.0);
          n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + 1e-12;
          for (int c = 0; c < 3; ++c) target.at(0, c, y, x) = v[c] / n;
        }
      Mask mask(1, 4, 5);
      loss_fixture("normals_loss/pred",
                   [&](Tape& t, Tensor* p) {
                     return normals_loss(t, p, target, mask);
                   },
                   pred);
    }
    {
      Tensor scores({1, 4, 5, 5});
      fill(scores, rng, -2.0, 2.0);
      LabelMap labels(1, 5, 5);
      for (auto& l : labels.v)
        l = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
      Mask mask(1, 5, 5);
      for (auto& m : mask.v) m = rng.bernoulli(0.8) ? 1 : 0;
      mask.at(0, 0, 0) = 1;
      loss_fixture("semantic_loss/scores",
                   [&](Tape& t, Tensor* p) {
                     return semantic_loss(t, p, labels, mask);
                   },
                   scores);
      ClassWeights w;
      w.alpha = {0.5, 2.0, 1.0, 0.25};
      loss_fixture("semantic_loss(weighted)/scores",
                   [&](Tape& t, Tensor* p) {
                     return semantic_loss(t, p, labels, mask, &w);
                   },
                   scores);
    }
  }

  void composed(const std::string& label, Task task, int classes) {
    ModelConfig cfg = tiny_config(task, classes);

    // Differentiate at a generic point: zero biases leave tiny-width relu
    // chains dead (and park the normals head on the normalization epsilon
    // ball), and even randomized draws can strand a 2-unit layer below
    // zero. Re-roll until one forward/backward reaches every parameter.
    Rng rng(opts.seed + 20);
    Model m = build_model(cfg, rng);
    BatchInputs in;
    bool alive_everywhere = false;
    for (int attempt = 0; attempt < 32 && !alive_everywhere; ++attempt) {
      Rng roll = Rng::fork(opts.seed + 20, static_cast<std::uint64_t>(attempt));
      m = build_model(cfg, roll);
      for (auto& pr : m.parameters())
        if (pr.name.ends_with(".b"))
          for (auto& v : pr.value->data) v = roll.uniform(0.05, 0.2);
      in = BatchInputs{};
      in.rgb = Tensor({1, 3, cfg.input_h, cfg.input_w});
      for (auto& v : in.rgb.data) v = roll.uniform(0.0, 1.0);

      for (auto& pr : m.parameters()) pr.value->grad.clear();
      Tape probe(true);
      auto outs = forward_train(probe, m, in, false);
      double sum = 0.0;
      for (Tensor* o : outs)
        for (std::size_t i = 0; i < o->data.size(); ++i) sum += o->data[i];
      Tensor* last = outs.back();
      last->ensure_grad();
      for (auto& g : last->grad) g = 1.0;
      for (Tensor* o : outs)
        if (o != last) {
          o->ensure_grad();
          for (auto& g : o->grad) g = 1.0;
        }
      (void)sum;
      probe.backward();
      alive_everywhere = true;
      for (auto& pr : m.parameters()) {
        bool alive = false;
        for (double g : pr.value->grad)
          if (g != 0.0) {
            alive = true;
            break;
          }
        if (!alive) {
          alive_everywhere = false;
          break;
        }
      }
    }

    const ArchPlan& p = m.plan;
    Tensor tdepth({1, 1, p.output.h, p.output.w});
    for (auto& v : tdepth.data) v = std::exp(rng.uniform(-0.5, 0.5));
    Tensor tnorm({1, 3, p.output.h, p.output.w});
    for (int y = 0; y < p.output.h; ++y)
      for (int x = 0; x < p.output.w; ++x) {
        double v[3], n = 0.0;
        for (double& vi : v) vi = rng.normal(0.0, 1.0);
        n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + 1e-12;
        for (int c = 0; c < 3; ++c) tnorm.at(0, c, y, x) = v[c] / n;
      }
    LabelMap tlab(1, p.output.h, p.output.w);
    for (auto& l : tlab.v)
      l = static_cast<std::uint8_t>(
          rng.uniform_int(0, std::max(1, classes) - 1));
    Mask mask(1, p.output.h, p.output.w, 1);

    auto run = [&](Tape& tape) -> double {
      auto outs = forward_train(tape, m, in, false);
      switch (task) {
        case Task::depth:
          return depth_loss(tape, outs[0], tdepth, mask);
        case Task::normals:
          return normals_loss(tape, outs[0], tnorm, mask);
        case Task::semantic:
          return semantic_loss(tape, outs[0], tlab, mask);
        case Task::depth_normals:
          return depth_loss(tape, outs[0], tdepth, mask) +
                 normals_loss(tape, outs[1], tnorm, mask);
      }
      return 0.0;
    };

    for (auto& pr : m.parameters()) {
      for (auto& q : m.parameters()) q.value->grad.clear();
      Tape tape(true);
      run(tape);
      tape.backward();

      Tensor analytic(pr.value->dims);
      if (!pr.value->grad.empty()) analytic.data = pr.value->grad;
      bool alive = false;
      for (double g : analytic.data)
        if (g != 0.0) {
          alive = true;
          break;
        }

      Tensor x0(pr.value->dims);
      x0.data = pr.value->data;
      auto f = [&](const Tensor& x) {
        pr.value->data = x.data;
        Tape t(false);
        return run(t);
      };
      GradCheckReport rep = gradcheck(label + ":" + pr.name, f, analytic, x0,
                                      opts.h, kComposedTol);
      pr.value->data = x0.data;
      if (!alive) {
        // zero-vs-zero agreement proves nothing; a parameter the loss never
        // reaches is a wiring bug, not a pass
        rep.passed = false;
        rep.error = "no gradient reached this parameter";
      }
      reports.push_back(std::move(rep));
    }
  }

  void negative_control() {
    Rng rng(opts.seed + 99);
    Tensor x({1, 1, 3, 3});
    fill(x, rng);
    Tensor analytic(x.dims);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      analytic.data[i] = -2.0 * x.data[i];  // true gradient of sum(x^2) is +2x
    auto f = [](const Tensor& t) {
      double s = 0.0;
      for (double v : t.data) s += v * v;
      return s;
    };
    reports.push_back(
        gradcheck("negative-control(sign-flip)", f, analytic, x, opts.h,
                  kOpTol));
  }
};

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(const SuiteOptions& opts) {
  Suite s{opts, {}, 1000};
  s.primitives();
  s.losses();
  s.composed("model(depth)", Task::depth, 0);
  s.composed("model(normals)", Task::normals, 0);
  s.composed("model(semantic)", Task::semantic, 3);
  s.composed("model(combined)", Task::depth_normals, 0);
  if (opts.inject_fault) s.negative_control();
  return s.reports;
}

bool suite_passed(const std::vector<GradCheckReport>& reports) {
  return !reports.empty() &&
         std::all_of(reports.begin(), reports.end(),
                     [](const GradCheckReport& r) { return r.passed; });
}

}  // namespace pixelmap
