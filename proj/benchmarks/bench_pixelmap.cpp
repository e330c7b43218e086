// Hot-path timings: the convolution/pool/upsample primitives at sizes the
// model actually runs, the desk-scale forward pass, the shared-trunk saving
// of the combined task against two single-task models, and the windowed
// fine-phase step against a full-plane step.
#include <benchmark/benchmark.h>

#include <vector>

#include "pixelmap/losses.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/ops.hpp"
#include "pixelmap/rng.hpp"
#include "pixelmap/tape.hpp"
#include "pixelmap/tensor.hpp"
#include "pixelmap/trainer.hpp"

using namespace pixelmap;

namespace {

void fill(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = rng.uniform(lo, hi);
}

ModelConfig desk_config(Task task, int classes = 0) {
  ModelConfig cfg;
  cfg.input_w = 64;
  cfg.input_h = 48;
  cfg.task = task;
  cfg.num_classes = classes;
  cfg.width_multiplier = 1.0 / 8.0;
  return cfg;
}

BatchInputs rgb_inputs(const ModelConfig& cfg, Rng& rng) {
  BatchInputs in;
  in.rgb = Tensor({1, 3, cfg.input_h, cfg.input_w});
  for (auto& v : in.rgb.data) v = rng.uniform(0.0, 1.0);
  return in;
}

void bm_conv2d(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  Rng rng(1);
  Tensor x({1, ch, hw, hw});
  fill(x, rng);
  ConvSpec spec = make_conv("b", ch, ch, k, 1, k / 2, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(conv2d(tape, &x, spec));
  }
}

void bm_maxpool(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  Rng rng(2);
  Tensor x({1, 16, hw, hw});
  fill(x, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(maxpool(tape, &x, 3, 2));
  }
}

void bm_upsample(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  Rng rng(3);
  Tensor x({1, 16, hw, hw});
  fill(x, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(upsample_bilinear(tape, &x, 2));
  }
}

void bm_forward_desk(benchmark::State& state) {
  Rng rng(4);
  ModelConfig cfg = desk_config(Task::depth);
  Model m = build_model(cfg, rng);
  BatchInputs in = rgb_inputs(cfg, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(forward_full(tape, m, in, false));
  }
}

void bm_train_step_desk(benchmark::State& state) {
  Rng rng(5);
  ModelConfig cfg = desk_config(Task::depth);
  Model m = build_model(cfg, rng);
  BatchInputs in = rgb_inputs(cfg, rng);
  Tensor target = Tensor::full({1, 1, m.plan.s2.h, m.plan.s2.w}, 2.0);
  Mask mask(1, m.plan.s2.h, m.plan.s2.w, 1);
  for (auto _ : state) {
    Tape tape(true);
    auto outs = forward_train(tape, m, in, false, nullptr, 2);
    benchmark::DoNotOptimize(depth_loss(tape, outs[0], target, mask));
    tape.backward();
  }
}

// Combined-task forward against running the depth and normals models
// separately; the gap is the full-view stack and the mid entries shared by
// the two branches.
void bm_trunk_shared(benchmark::State& state) {
  Rng rng(6);
  ModelConfig cfg = desk_config(Task::depth_normals);
  Model m = build_model(cfg, rng);
  BatchInputs in = rgb_inputs(cfg, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(forward_full(tape, m, in, false));
  }
}

void bm_trunk_two_models(benchmark::State& state) {
  Rng rng(6);
  ModelConfig dcfg = desk_config(Task::depth);
  ModelConfig ncfg = desk_config(Task::normals);
  Model md = build_model(dcfg, rng);
  Model mn = build_model(ncfg, rng);
  BatchInputs in = rgb_inputs(dcfg, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(forward_full(tape, md, in, false));
    benchmark::DoNotOptimize(forward_full(tape, mn, in, false));
  }
}

// One fine-phase gradient step on a mid-grid-sized window against the same
// step on the whole fine plane.
void fine_step(Model& m, const BatchInputs& in,
               const std::vector<Tensor>& preds, int oy, int ox, int ch,
               int cw) {
  Tensor target = Tensor::full({1, 1, ch, cw}, 2.0);
  Mask mask(1, ch, cw, 1);
  Tape tape(true);
  auto outs = forward_scale3_crop(tape, m, in, preds, oy, ox, ch, cw);
  benchmark::DoNotOptimize(depth_loss(tape, outs[0], target, mask));
  tape.backward();
}

void bm_fine_step_window(benchmark::State& state) {
  Rng rng(7);
  ModelConfig cfg = desk_config(Task::depth);
  Model m = build_model(cfg, rng);
  BatchInputs in = rgb_inputs(cfg, rng);
  const std::vector<Tensor> preds = scale2_predictions(m, in);
  for (auto _ : state)
    fine_step(m, in, preds, 0, 0, m.plan.s2.h, m.plan.s2.w);
}

void bm_fine_step_full_plane(benchmark::State& state) {
  Rng rng(7);
  ModelConfig cfg = desk_config(Task::depth);
  Model m = build_model(cfg, rng);
  BatchInputs in = rgb_inputs(cfg, rng);
  const std::vector<Tensor> preds = scale2_predictions(m, in);
  for (auto _ : state)
    fine_step(m, in, preds, 0, 0, m.plan.s3.h, m.plan.s3.w);
}

}  // namespace

BENCHMARK(bm_conv2d)
    ->Args({8, 24, 3})
    ->Args({8, 24, 5})
    ->Args({16, 48, 5})
    ->Args({8, 96, 9});
BENCHMARK(bm_maxpool)->Arg(24)->Arg(48)->Arg(96);
BENCHMARK(bm_upsample)->Arg(12)->Arg(24)->Arg(48);
BENCHMARK(bm_forward_desk);
BENCHMARK(bm_train_step_desk);
BENCHMARK(bm_trunk_shared);
BENCHMARK(bm_trunk_two_models);
BENCHMARK(bm_fine_step_window);
BENCHMARK(bm_fine_step_full_plane);

BENCHMARK_MAIN();
