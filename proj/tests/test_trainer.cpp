// Two-phase SGD trainer: schedule and update arithmetic against closed forms,
// target resampling oracles, determinism and freeze contracts, checkpoint
// resume, and evaluation plumbing. Training runs use 32x24 scenes at 1/8
// width so every case finishes in seconds.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "pixelmap/config.hpp"
#include "pixelmap/data_io.hpp"
#include "pixelmap/errors.hpp"
#include "pixelmap/losses.hpp"
#include "pixelmap/metrics.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/trainer.hpp"
#include "support/test_util.hpp"

using namespace pixelmap;

namespace {

std::vector<Sample> make_data(int n, std::uint64_t seed, int w = 32, int h = 24,
                              int classes = 4) {
  SceneSpec spec;
  spec.width = w;
  spec.height = h;
  spec.num_classes = classes;
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Rng r = Rng::fork(seed, static_cast<std::uint64_t>(i));
    out.push_back(gen_scene(spec, r));
  }
  return out;
}

ModelConfig smoke_config(Task task, int classes = 0,
                         std::vector<int> scales = {1, 2}) {
  ModelConfig c;
  c.input_w = 32;
  c.input_h = 24;
  c.task = task;
  c.num_classes = classes;
  c.scales = std::move(scales);
  c.width_multiplier = 0.125;
  apply_task_presets(c);
  return c;
}

TrainConfig smoke_train(long steps, double lr, std::uint64_t seed = 7) {
  TrainConfig t;
  t.batch_size = 4;
  t.base_lr = lr;
  t.lr_step_at = 1000000;  // flat schedule unless a case says otherwise
  t.phase1_steps = steps;
  t.phase2_steps = steps;
  t.seed = seed;
  t.augment = false;
  return t;
}

std::map<std::string, std::vector<double>> snapshot(Model& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : m.parameters()) out[p.name] = p.value->data;
  return out;
}

// Batch inputs the way the trainer feeds them: RGB plus ground-truth
// modality channels zeroed at invalid pixels.
BatchInputs inputs_of(const std::vector<const Sample*>& ss) {
  const int n = static_cast<int>(ss.size());
  const int h = ss[0]->height(), w = ss[0]->width();
  BatchInputs in;
  in.rgb = Tensor::zeros({n, 3, h, w});
  in.depth = Tensor::zeros({n, 1, h, w});
  in.normals = Tensor::zeros({n, 3, h, w});
  for (int b = 0; b < n; ++b) {
    const Sample& s = *ss[b];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double valid = s.mask.at(0, y, x) ? 1.0 : 0.0;
        for (int c = 0; c < 3; ++c) {
          in.rgb.at(b, c, y, x) = s.rgb.at(0, c, y, x);
          in.normals.at(b, c, y, x) = s.normals.at(0, c, y, x) * valid;
        }
        in.depth.at(b, 0, y, x) = s.depth.at(0, 0, y, x) * valid;
      }
  }
  return in;
}

struct StackedTargets {
  Tensor depth;
  Mask mask;
};

StackedTargets stack_depth_targets(const std::vector<const Sample*>& ss,
                                   int gh, int gw) {
  const int n = static_cast<int>(ss.size());
  StackedTargets out;
  out.depth = Tensor::zeros({n, 1, gh, gw});
  out.mask = Mask(n, gh, gw, 0);
  for (int b = 0; b < n; ++b) {
    TrainTargets t = make_targets(*ss[b], gh, gw);
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        out.depth.at(b, 0, y, x) = t.depth.at(0, 0, y, x);
        out.mask.at(b, y, x) = t.mask.at(0, y, x);
      }
  }
  return out;
}

Tensor scalar_param(double v) {
  Tensor t = Tensor::zeros({1});
  t.data[0] = v;
  return t;
}

void set_grad(Tensor& t, double g) {
  t.ensure_grad();
  for (double& v : t.grad) v = g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule and update arithmetic
// ---------------------------------------------------------------------------

TEST_CASE("rate schedule: flat before the boundary, stepped from it on") {
  TrainConfig cfg;
  cfg.base_lr = 0.01;
  cfg.lr_step_at = 100;
  cfg.lr_step_factor = 0.1;
  CHECK(lr_at_step(0, cfg) == 0.01);
  CHECK(lr_at_step(99, cfg) == 0.01);
  CHECK(lr_at_step(100, cfg) == 0.01 * 0.1);  // the boundary step is stepped
  CHECK(lr_at_step(5000, cfg) == 0.01 * 0.1);

  // pure surface-orientation training runs ten times hotter
  CHECK(effective_lr(0, cfg, Task::depth) == 0.01);
  CHECK(effective_lr(0, cfg, Task::normals) == 0.01 * 10.0);
  CHECK(effective_lr(0, cfg, Task::depth_normals) == 0.01);
  CHECK(effective_lr(100, cfg, Task::normals) == (0.01 * 0.1) * 10.0);
}

TEST_CASE("sgd: zero gradient with zero velocity changes nothing") {
  Tensor w = Tensor::zeros({3});
  w.data = {1.5, -2.25, 0.75};
  const std::vector<double> before = w.data;
  set_grad(w, 0.0);
  std::vector<Model::ParamRef> params{{"layer.w", &w, 1.0}};
  TrainState st;
  sgd_update(params, st, 0.1, 0.9);
  CHECK(w.data == before);
  REQUIRE(st.momentum.count("layer.w") == 1);  // buffer exists, stays zero
  for (double v : st.momentum.at("layer.w").data) CHECK(v == 0.0);
}

TEST_CASE("sgd: first-step closed form, with and without a layer multiplier") {
  {
    Tensor w = scalar_param(1.0);
    set_grad(w, 1.0);
    std::vector<Model::ParamRef> params{{"p.w", &w, 1.0}};
    TrainState st;
    sgd_update(params, st, 0.1, 0.0);
    CHECK(w.data[0] == 1.0 - (0.1 * 1.0) * 1.0);
  }
  {
    Tensor w = scalar_param(1.0);
    set_grad(w, 1.0);
    std::vector<Model::ParamRef> params{{"p.w", &w, 0.1}};
    TrainState st;
    sgd_update(params, st, 0.1, 0.0);
    CHECK(w.data[0] == 1.0 - (0.1 * 0.1) * 1.0);  // rate times the multiplier
  }
}

TEST_CASE("sgd: velocity follows v <- mu v - lr g, w <- w + v exactly") {
  Tensor w = scalar_param(2.0);
  std::vector<Model::ParamRef> params{{"p.w", &w, 1.0}};
  TrainState st;
  double ref_w = 2.0, ref_v = 0.0;
  for (int k = 0; k < 3; ++k) {
    set_grad(w, 1.0);
    sgd_update(params, st, 0.1, 0.9);
    ref_v = 0.9 * ref_v - (0.1 * 1.0) * 1.0;
    ref_w = ref_w + ref_v;
    CHECK(w.data[0] == ref_w);
    CHECK(st.momentum.at("p.w").data[0] == ref_v);
  }
}

TEST_CASE("sgd: missing or non-finite gradients abort naming the parameter") {
  Tensor w = scalar_param(1.0);
  std::vector<Model::ParamRef> params{{"s2_mid1.w", &w, 1.0}};
  TrainState st;
  CHECK_THROWS_AS(sgd_update(params, st, 0.1, 0.9), TrainError);  // no grad

  set_grad(w, std::nan(""));
  try {
    sgd_update(params, st, 0.1, 0.9);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("s2_mid1.w") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Target resampling and prediction resizing
// ---------------------------------------------------------------------------

TEST_CASE("targets: nearest source pixel, validity carried, labels discrete") {
  // 2x4 sample with distinct per-pixel values everywhere
  Sample s;
  s.rgb = Tensor::zeros({1, 3, 2, 4});
  s.depth = Tensor::zeros({1, 1, 2, 4});
  s.normals = Tensor::zeros({1, 3, 2, 4});
  s.labels = LabelMap(1, 2, 4);
  s.mask = Mask(1, 2, 4, 1);
  s.intrinsics = Intrinsics::standard(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) {
      s.depth.at(0, 0, y, x) = 1.0 + 4 * y + x;  // 1..8
      for (int c = 0; c < 3; ++c)
        s.normals.at(0, c, y, x) = 100.0 * c + 10.0 * y + x;
      s.labels.at(0, y, x) = static_cast<std::uint8_t>(y == 1 ? x : 0);
    }

  // 1x2 grid reads source row 1, columns 1 and 3
  TrainTargets t = make_targets(s, 1, 2);
  CHECK(t.depth.at(0, 0, 0, 0) == 6.0);
  CHECK(t.depth.at(0, 0, 0, 1) == 8.0);
  CHECK(t.normals.at(0, 2, 0, 0) == 211.0);
  CHECK(t.normals.at(0, 0, 0, 1) == 13.0);
  CHECK(t.labels.at(0, 0, 0) == 1);
  CHECK(t.labels.at(0, 0, 1) == 3);
  CHECK(t.mask.count_valid() == 2);

  // a grid cell is valid only when its source pixel is
  s.mask.at(0, 1, 3) = 0;
  t = make_targets(s, 1, 2);
  CHECK(t.mask.at(0, 0, 0) == 1);
  CHECK(t.mask.at(0, 0, 1) == 0);
  CHECK(t.mask.count_valid() == 1);

  // same-size resampling is the identity
  TrainTargets id = make_targets(s, 2, 4);
  CHECK(id.depth.data == s.depth.data);
  CHECK(id.normals.data == s.normals.data);
  CHECK(id.labels.v == s.labels.v);
  CHECK(id.mask.v == s.mask.v);
}

TEST_CASE("resize: half-pixel bilinear values, identity, and upsampler match") {
  Tensor src = Tensor::zeros({1, 1, 2, 2});
  src.at(0, 0, 0, 0) = 1.0;
  src.at(0, 0, 0, 1) = 3.0;
  src.at(0, 0, 1, 0) = 5.0;
  src.at(0, 0, 1, 1) = 7.0;

  Tensor up = resize_bilinear(src, 4, 4);
  REQUIRE(up.h() == 4);
  REQUIRE(up.w() == 4);
  CHECK(up.at(0, 0, 0, 0) == 1.0);   // clamped corner
  CHECK(up.at(0, 0, 1, 1) == 2.5);   // interior blend at quarter offsets
  CHECK(up.at(0, 0, 0, 3) == 3.0);
  CHECK(up.at(0, 0, 3, 3) == 7.0);

  Tensor same = resize_bilinear(src, 2, 2);
  CHECK(same.data == src.data);

  // constant maps stay constant through any size change
  Tensor ones = Tensor::full({1, 1, 4, 4}, 1.0);
  Tensor down = resize_bilinear(ones, 2, 2);
  for (double v : down.data) CHECK(v == 1.0);

  // integer-factor resizing agrees with the recorded upsampler
  Rng rng(11);
  Tensor r = Tensor::zeros({1, 2, 5, 7});
  testutil::fill_uniform(r, rng, -2.0, 2.0);
  Tape tape(false);
  Tensor* tracked = tape.track(r);
  Tensor* up2 = upsample_bilinear(tape, tracked, 2);
  Tensor mine = resize_bilinear(r, 10, 14);
  CHECK(testutil::max_abs_diff(mine, *up2) < 1e-12);
}

// ---------------------------------------------------------------------------
// Phase 1
// ---------------------------------------------------------------------------

TEST_CASE("phase 1: zero rate leaves every parameter bit-identical") {
  auto data = make_data(4, 21);
  Rng mr(3);
  Model m = build_model(smoke_config(Task::depth), mr);
  auto before = snapshot(m);

  TrainConfig cfg = smoke_train(5, 0.0);
  cfg.augment = true;  // exercise the augmentation path too
  TrainState st = make_state(cfg);
  auto curve = train_phase1(m, data, cfg, st);

  REQUIRE(curve.size() == 5);
  for (const auto& pt : curve) {
    CHECK(std::isfinite(pt.loss));
    CHECK(pt.lr == 0.0);
  }
  auto after = snapshot(m);
  for (const auto& [name, v] : before)
    CHECK(v == after.at(name));
  CHECK(st.step == 5);
}

TEST_CASE("phase 1: fixed seeds reproduce the run bitwise, new seeds move it") {
  auto data = make_data(4, 21);
  TrainConfig cfg = smoke_train(6, 0.002);
  cfg.augment = true;

  auto run = [&](std::uint64_t seed) {
    Rng mr(3);
    Model m = build_model(smoke_config(Task::depth), mr);
    TrainConfig c = cfg;
    c.seed = seed;
    TrainState st = make_state(c);
    auto curve = train_phase1(m, data, c, st);
    return std::make_pair(curve, snapshot(m));
  };

  auto [curve_a, params_a] = run(7);
  auto [curve_b, params_b] = run(7);
  auto [curve_c, params_c] = run(8);

  REQUIRE(curve_a.size() == curve_b.size());
  for (std::size_t i = 0; i < curve_a.size(); ++i) {
    CHECK(curve_a[i].loss == curve_b[i].loss);
    CHECK(curve_a[i].step == static_cast<long>(i));
  }
  for (const auto& [name, v] : params_a)
    CHECK(v == params_b.at(name));

  bool any_differs = false;
  for (std::size_t i = 0; i < curve_c.size(); ++i)
    any_differs = any_differs || curve_c[i].loss != curve_a[i].loss;
  CHECK(any_differs);
}

TEST_CASE("phase 1: fine-scale parameters stay untouched; rate column steps") {
  auto data = make_data(4, 21);
  Rng mr(5);
  Model m = build_model(smoke_config(Task::depth, 0, {1, 2, 3}), mr);
  auto before = snapshot(m);
  std::map<std::string, bool> is_fine;
  for (const auto& p : m.scale3_parameters()) is_fine[p.name] = true;
  REQUIRE_FALSE(is_fine.empty());

  TrainConfig cfg = smoke_train(6, 0.002);
  cfg.lr_step_at = 3;
  cfg.lr_step_factor = 0.1;
  TrainState st = make_state(cfg);
  auto curve = train_phase1(m, data, cfg, st);

  bool coarse_moved = false;
  for (const auto& p : m.parameters()) {
    if (is_fine.count(p.name))
      CHECK(p.value->data == before.at(p.name));
    else
      coarse_moved = coarse_moved || p.value->data != before.at(p.name);
  }
  CHECK(coarse_moved);

  REQUIRE(curve.size() == 6);
  for (int i = 0; i < 6; ++i)
    CHECK(curve[i].lr == (i < 3 ? 0.002 : 0.002 * 0.1));
  CHECK(st.last_loss == curve.back().loss);
}

TEST_CASE("phase 1: one shared rate trains depth, normals, and labels on a "
          "small overfit set") {
  struct Case {
    Task task;
    int classes;
  };
  for (const Case& c : {Case{Task::depth, 0}, Case{Task::normals, 0},
                        Case{Task::semantic, 4}}) {
    CAPTURE(static_cast<int>(c.task));
    auto data = make_data(6, 33, 32, 24, c.classes == 0 ? 4 : c.classes);
    Rng mr(9);
    Model m = build_model(smoke_config(c.task, c.classes), mr);
    TrainConfig cfg = smoke_train(260, 0.005);
    TrainState st = make_state(cfg);
    auto curve = train_phase1(m, data, cfg, st);
    REQUIRE(curve.size() == 260);

    double tail = 0.0;
    for (std::size_t i = curve.size() - 5; i < curve.size(); ++i)
      tail += curve[i].loss;
    tail /= 5.0;
    // the orientation loss is a negative mean dot product: shift both ends
    // so "fraction of the initial loss" stays meaningful
    const double shift = c.task == Task::normals ? 1.0 : 0.0;
    const double ratio = (tail + shift) / (curve.front().loss + shift);
    CAPTURE(curve.front().loss);
    CAPTURE(tail);
    CHECK(ratio < 0.2);
  }
}

// ---------------------------------------------------------------------------
// Phase 2
// ---------------------------------------------------------------------------

TEST_CASE("phase 2: trains only the fine stack and continues the counter") {
  auto data = make_data(4, 21);
  Rng mr(5);
  Model m = build_model(smoke_config(Task::depth, 0, {1, 2, 3}), mr);

  TrainConfig cfg = smoke_train(5, 0.002);
  cfg.augment = true;
  TrainState st = make_state(cfg);
  train_phase1(m, data, cfg, st);

  auto before = snapshot(m);
  std::map<std::string, bool> is_fine;
  for (const auto& p : m.scale3_parameters()) is_fine[p.name] = true;

  cfg.phase2_steps = 8;
  auto curve = train_phase2(m, data, cfg, st);
  REQUIRE(curve.size() == 8);
  CHECK(curve.front().step == 5);
  CHECK(st.step == 13);
  for (const auto& pt : curve) CHECK(std::isfinite(pt.loss));

  bool fine_moved = false;
  for (const auto& p : m.parameters()) {
    if (is_fine.count(p.name)) {
      fine_moved = fine_moved || p.value->data != before.at(p.name);
    } else {
      CHECK(p.value->data == before.at(p.name));
    }
  }
  CHECK(fine_moved);
}

TEST_CASE("phase 2: configuration errors — no fine scale, oversized window") {
  auto data = make_data(2, 21);
  TrainConfig cfg = smoke_train(2, 0.001);

  Rng mr(5);
  Model two_scale = build_model(smoke_config(Task::depth), mr);
  TrainState st = make_state(cfg);
  CHECK_THROWS_AS(train_phase2(two_scale, data, cfg, st), ConfigError);

  Model m = build_model(smoke_config(Task::depth, 0, {1, 2, 3}), mr);
  TrainConfig big = cfg;
  big.crop_h = m.plan.s3.h + 1;
  big.crop_w = m.plan.s3.w;
  TrainState st2 = make_state(big);
  CHECK_THROWS_AS(train_phase2(m, data, big, st2), ConfigError);
}

TEST_CASE("phase 2: a window covering the whole fine grid computes the "
          "whole-image loss") {
  auto data = make_data(1, 21);
  Rng mr(5);
  Model m = build_model(smoke_config(Task::depth, 0, {1, 2, 3}), mr);
  Model frozen = m;  // value copy: parameters are plain tensors

  TrainConfig cfg = smoke_train(1, 0.001);
  cfg.batch_size = 1;
  cfg.crop_h = m.plan.s3.h;
  cfg.crop_w = m.plan.s3.w;
  cfg.phase2_steps = 1;
  TrainState st = make_state(cfg);
  auto curve = train_phase2(m, data, cfg, st);
  REQUIRE(curve.size() == 1);

  // replay by hand on the untouched copy: one sample, no augmentation, and a
  // full-plane window pin every random draw
  BatchInputs in = inputs_of({&data[0]});
  std::vector<Tensor> preds = scale2_predictions(frozen, in);
  Tape tape(true);
  auto outs = forward_scale3_crop(tape, frozen, in, preds, 0, 0,
                                  frozen.plan.s3.h, frozen.plan.s3.w);
  StackedTargets t = stack_depth_targets({&data[0]}, frozen.plan.s3.h,
                                         frozen.plan.s3.w);
  const double expect = depth_loss(tape, outs[0], t.depth, t.mask);
  CHECK(curve[0].loss == expect);
}

TEST_CASE("one small step descends on a fixed batch for at least 19 of 20 "
          "initializations") {
  auto data = make_data(2, 55);
  std::vector<const Sample*> batch{&data[0], &data[1]};
  BatchInputs in = inputs_of(batch);

  int descended = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng mr(seed);
    Model m = build_model(smoke_config(Task::depth), mr);
    StackedTargets t = stack_depth_targets(batch, m.plan.s2.h, m.plan.s2.w);

    Tape tape(true);
    auto outs = forward_train(tape, m, in, false, nullptr, 2);
    const double loss0 = depth_loss(tape, outs[0], t.depth, t.mask);
    tape.backward();
    TrainState st;
    auto params = m.parameters();
    sgd_update(params, st, 1e-3, 0.0);

    Tape eval(false);
    auto outs1 = forward_train(eval, m, in, false, nullptr, 2);
    Tape loss_tape(false);
    const double loss1 = depth_loss(loss_tape, outs1[0], t.depth, t.mask);
    if (loss1 < loss0) ++descended;
  }
  CHECK(descended >= 19);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint: resuming mid-run is bit-identical to never stopping") {
  auto data = make_data(4, 21);
  const std::string path = "trainer_ckpt_test.pmck";

  TrainConfig cfg = smoke_train(6, 0.002);
  cfg.augment = true;

  Rng mr(3);
  Model m = build_model(smoke_config(Task::depth, 0, {1, 2, 3}), mr);
  TrainState st = make_state(cfg);
  train_phase1(m, data, cfg, st);
  save_checkpoint(path, m, st);

  // keep going without stopping
  TrainConfig more = cfg;
  more.phase1_steps = 4;
  more.phase2_steps = 5;
  auto curve_a1 = train_phase1(m, data, more, st);
  auto curve_a2 = train_phase2(m, data, more, st);
  auto params_a = snapshot(m);

  // reload and repeat the continuation
  LoadedTraining loaded = load_checkpoint(path);
  CHECK(loaded.state.step == 6);
  Config echo_orig, echo_loaded;
  write_model_config(echo_orig, smoke_config(Task::depth, 0, {1, 2, 3}));
  write_model_config(echo_loaded, loaded.model.config);
  CHECK(echo_orig.echo() == echo_loaded.echo());

  auto curve_b1 = train_phase1(loaded.model, data, more, loaded.state);
  auto curve_b2 = train_phase2(loaded.model, data, more, loaded.state);
  auto params_b = snapshot(loaded.model);

  REQUIRE(curve_a1.size() == curve_b1.size());
  for (std::size_t i = 0; i < curve_a1.size(); ++i)
    CHECK(curve_a1[i].loss == curve_b1[i].loss);
  for (std::size_t i = 0; i < curve_a2.size(); ++i)
    CHECK(curve_a2[i].loss == curve_b2[i].loss);
  for (const auto& [name, v] : params_a)
    CHECK(v == params_b.at(name));
  CHECK(loaded.state.step == st.step);

  std::remove(path.c_str());
}

TEST_CASE("checkpoint: corrupt headers are rejected with their offset") {
  auto data = make_data(1, 21);
  const std::string path = "trainer_ckpt_corrupt.pmck";
  Rng mr(3);
  Model m = build_model(smoke_config(Task::depth), mr);
  TrainState st;
  save_checkpoint(path, m, st);

  auto bytes = read_file_bytes(path);
  auto rewrite = [&](const std::vector<std::uint8_t>& b) {
    write_file_bytes(path, b);
  };

  {
    auto bad = bytes;
    bad[0] = 'X';
    rewrite(bad);
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset == 0);
    }
  }
  {
    auto bad = bytes;
    bad[4] = 99;  // unsupported version
    rewrite(bad);
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset == 4);
    }
  }
  {
    auto bad = bytes;
    bad.resize(bytes.size() / 2);  // truncated payload
    rewrite(bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("missing_checkpoint.pmck"), IoError);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST_CASE("evaluate: matches the metric accumulators fed the same "
          "full-resolution predictions") {
  auto data = make_data(4, 77);
  Rng mr(13);
  Model m = build_model(smoke_config(Task::depth), mr);

  MetricReport r = evaluate(m, data);
  CHECK(r.samples == 4);
  CHECK(r.task == Task::depth);

  DepthAccumulator acc;
  for (const Sample& s : data) {
    Tensor pred = predict_full_res(m, s);
    REQUIRE(pred.h() == s.height());
    REQUIRE(pred.w() == s.width());
    for (double v : pred.data) CHECK(v > 0.0);  // metric depth, not log
    acc.add(pred, s.depth, s.mask);
  }
  DepthMetrics want = acc.result();
  CHECK(r.depth.delta1 == want.delta1);
  CHECK(r.depth.abs_rel == want.abs_rel);
  CHECK(r.depth.rms_lin == want.rms_lin);
  CHECK(r.depth.rms_log == want.rms_log);
  CHECK(r.depth.scale_inv == want.scale_inv);

  // two calls agree bitwise (no hidden state)
  MetricReport r2 = evaluate(m, data);
  CHECK(r2.depth.abs_rel == r.depth.abs_rel);
  CHECK(r2.depth.delta1 == r.depth.delta1);

  CHECK_THROWS_AS(evaluate(m, {}), InputError);
}

TEST_CASE("evaluate: combined task fills both blocks; unit normals out") {
  auto data = make_data(2, 78);
  Rng mr(13);
  Model m = build_model(smoke_config(Task::depth_normals), mr);
  Tensor pred = predict_full_res(m, data[0]);
  REQUIRE(pred.c() == 4);
  for (int y = 0; y < pred.h(); ++y)
    for (int x = 0; x < pred.w(); ++x) {
      CHECK(pred.at(0, 0, y, x) > 0.0);
      const double nx = pred.at(0, 1, y, x), ny = pred.at(0, 2, y, x),
                   nz = pred.at(0, 3, y, x);
      CHECK(std::abs(std::sqrt(nx * nx + ny * ny + nz * nz) - 1.0) < 1e-9);
    }
  MetricReport r = evaluate(m, data);
  CHECK(std::isfinite(r.depth.abs_rel));
  CHECK(std::isfinite(r.normals.mean_deg));
  CHECK(r.normals.mean_deg >= 0.0);
}

TEST_CASE("evaluate: scoring the ground truth against itself is perfect") {
  auto data = make_data(3, 79);

  MetricReport d = evaluate_ground_truth_echo(data, Task::depth, 0);
  CHECK(d.depth.delta1 == 1.0);
  CHECK(d.depth.delta3 == 1.0);
  CHECK(d.depth.abs_rel == 0.0);
  CHECK(d.depth.rms_lin == 0.0);
  CHECK(d.depth.scale_inv == 0.0);

  MetricReport n = evaluate_ground_truth_echo(data, Task::normals, 0);
  CHECK(n.normals.mean_deg < 1e-5);
  CHECK(n.normals.within_11 == 1.0);
  CHECK(n.normals.within_30 == 1.0);

  MetricReport s = evaluate_ground_truth_echo(data, Task::semantic, 4);
  CHECK(s.seg.pixel_acc == 1.0);
  CHECK(s.seg.mean_class_acc == 1.0);
  CHECK(s.seg.mean_jaccard == 1.0);

  CHECK_THROWS_AS(evaluate_ground_truth_echo({}, Task::depth, 0), InputError);
}

TEST_CASE("evaluate: semantic report uses resized class probabilities") {
  auto data = make_data(2, 80);
  Rng mr(13);
  Model m = build_model(smoke_config(Task::semantic, 4), mr);
  Tensor pred = predict_full_res(m, data[0]);
  REQUIRE(pred.c() == 4);
  MetricReport r = evaluate(m, data);
  CHECK(r.seg.pixel_acc >= 0.0);
  CHECK(r.seg.pixel_acc <= 1.0);
  CHECK(r.num_classes == 4);
}

// ---------------------------------------------------------------------------
// Parallel augmentation, loss options, input plumbing, rejection
// ---------------------------------------------------------------------------

TEST_CASE("a parallel augmentation pool reproduces the serial run bitwise") {
  auto data = make_data(4, 21);
  TrainConfig cfg = smoke_train(6, 0.002);
  cfg.augment = true;

  auto run = [&](int workers) {
    Rng mr(3);
    Model m = build_model(smoke_config(Task::depth), mr);
    TrainConfig c = cfg;
    c.workers = workers;
    TrainState st = make_state(c);
    auto curve = train_phase1(m, data, c, st);
    return std::make_pair(curve, snapshot(m));
  };
  auto [curve_serial, params_serial] = run(1);
  auto [curve_pool, params_pool] = run(3);

  for (std::size_t i = 0; i < curve_serial.size(); ++i)
    CHECK(curve_serial[i].loss == curve_pool[i].loss);
  for (const auto& [name, v] : params_serial)
    CHECK(v == params_pool.at(name));
}

TEST_CASE("median-frequency class weights change the semantic training signal") {
  auto data = make_data(4, 44);
  auto run = [&](bool reweight) {
    Rng mr(3);
    Model m = build_model(smoke_config(Task::semantic, 4), mr);
    TrainConfig cfg = smoke_train(2, 0.001);
    cfg.reweight_classes = reweight;
    TrainState st = make_state(cfg);
    return train_phase1(m, data, cfg, st);
  };
  auto plain = run(false);
  auto weighted = run(true);
  // box scenes are dominated by the ground class, so the weights are not all
  // one and the very first loss already differs
  CHECK(plain[0].loss != weighted[0].loss);
}

TEST_CASE("ground-truth input modalities feed the entry convolutions") {
  auto data = make_data(3, 45);
  ModelConfig mc = smoke_config(Task::depth);
  mc.input_modalities = {Modality::rgb, Modality::depth, Modality::normals};
  Rng mr(3);
  Model m = build_model(mc, mr);
  TrainConfig cfg = smoke_train(3, 0.001);
  cfg.augment = true;
  TrainState st = make_state(cfg);
  auto curve = train_phase1(m, data, cfg, st);
  for (const auto& pt : curve) CHECK(std::isfinite(pt.loss));
  MetricReport r = evaluate(m, data);
  CHECK(std::isfinite(r.depth.abs_rel));
}

TEST_CASE("datasets that do not fit the model are rejected") {
  Rng mr(3);
  Model m = build_model(smoke_config(Task::depth), mr);
  TrainConfig cfg = smoke_train(2, 0.001);
  TrainState st = make_state(cfg);

  std::vector<Sample> empty;
  CHECK_THROWS_AS(train_phase1(m, empty, cfg, st), InputError);

  auto wrong_size = make_data(1, 21, 64, 48);
  CHECK_THROWS_AS(train_phase1(m, wrong_size, cfg, st), InputError);
  CHECK_THROWS_AS(evaluate(m, wrong_size), InputError);

  // a label outside the model's class range at a valid pixel
  Model sm = build_model(smoke_config(Task::semantic, 3), mr);
  auto data = make_data(1, 21);
  [&] {
    for (int y = 0; y < data[0].labels.h; ++y)
      for (int x = 0; x < data[0].labels.w; ++x)
        if (data[0].mask.at(0, y, x)) {
          data[0].labels.at(0, y, x) = 3;  // class id == num_classes
          return;
        }
  }();
  TrainState st2 = make_state(cfg);
  CHECK_THROWS_AS(train_phase1(sm, data, cfg, st2), InputError);

  TrainConfig bad = cfg;
  bad.batch_size = 0;
  TrainState st3 = make_state(bad);
  auto ok = make_data(1, 21);
  CHECK_THROWS_AS(train_phase1(m, ok, bad, st3), ConfigError);
}

TEST_CASE("make_state seeds the generator from the run seed") {
  TrainConfig cfg;
  cfg.seed = 123;
  TrainState st = make_state(cfg);
  CHECK(st.step == 0);
  CHECK(st.rng.save_state() == Rng(123).save_state());
}
