#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pixelmap/augment.hpp"
#include "pixelmap/metrics.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/rng.hpp"
#include "pixelmap/sample.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// ---------------------------------------------------------------------------
// Two-phase minibatch SGD. Phase 1 trains the coarse stack and the mid
// refinement jointly with the loss at the mid grid; phase 2 freezes those and
// trains the fine refinement alone on random crops of the fine grid. One
// monotonic step counter spans both phases, and the rate schedule keys off it.
// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 8;
  double base_lr = 0.01;
  double momentum = 0.9;
  long lr_step_at = 1500;        // first step that uses the stepped-down rate
  double lr_step_factor = 0.1;
  long phase1_steps = 2000;
  long phase2_steps = 1000;
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentConfig augment_config;
  int crop_h = 0, crop_w = 0;    // phase-2 window; 0 means the mid-grid size
  int workers = 1;               // threads resampling augmented batches
  bool reweight_classes = false; // median-frequency class weights (semantic)
  double normals_lr_boost = 10.0;
};

struct TrainState {
  long step = 0;
  Rng rng{1};
  std::map<std::string, Tensor> momentum;  // velocity per parameter name
  double last_loss = 0.0;
};

struct LossPoint {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Fresh state at step zero with the generator seeded from cfg.seed. The
// training functions never reseed — resuming from a checkpoint keeps the
// stream exactly where it stopped.
TrainState make_state(const TrainConfig& cfg);

// Schedule value at a step: base_lr before lr_step_at, base_lr * factor from
// lr_step_at on (the boundary step already uses the stepped rate).
double lr_at_step(long step, const TrainConfig& cfg);

// Schedule times the task preset: pure surface-orientation training runs at
// normals_lr_boost times the base rate.
double effective_lr(long step, const TrainConfig& cfg, Task task);

// One momentum-SGD step over `params`:
//   v <- momentum * v - (lr * layer_multiplier) * g,  w <- w + v.
// Velocity buffers live in state.momentum keyed by parameter name and are
// created as zeros on first use. Every passed parameter must carry a gradient
// (the caller picks the set its backward pass reached); a missing or
// non-finite gradient aborts with TrainError naming the parameter.
void sgd_update(const std::vector<Model::ParamRef>& params, TrainState& state,
                double lr, double momentum);

// Ground truth resampled to a prediction grid by nearest source pixel
// (source row = floor((i + 0.5) * in_h / out_h), same for columns). Nearest
// keeps labels discrete, normals unit, and depths positive; a grid cell is
// valid only if its source pixel is. Depth stays metric.
struct TrainTargets {
  Tensor depth;      // (1,1,gh,gw)
  Tensor normals;    // (1,3,gh,gw)
  LabelMap labels;   // (1,gh,gw)
  Mask mask;         // (1,gh,gw)
};
TrainTargets make_targets(const Sample& s, int out_h, int out_w);

// Plain bilinear resize to an arbitrary size (half-pixel-centre sampling,
// edges clamped), used to lift predictions to ground-truth resolution.
// Not recorded on any tape.
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);

// Phase 1: minibatches drawn with replacement, augmented, loss at the mid
// grid. Updates every parameter except the fine-refinement stack (which a
// later phase owns). Returns one point per step; state.step advances with
// each. `after_step` (optional) runs after each update, e.g. to checkpoint.
std::vector<LossPoint> train_phase1(
    Model& m, const std::vector<Sample>& data, const TrainConfig& cfg,
    TrainState& state, const std::function<void(long)>& after_step = {});

// Phase 2: coarse+mid run without recording, the fine stack trains on random
// crops of the fine grid. Only fine-stack parameters change — the rest are
// bit-identical afterwards. Model must have the fine scale configured.
std::vector<LossPoint> train_phase2(
    Model& m, const std::vector<Sample>& data, const TrainConfig& cfg,
    TrainState& state, const std::function<void(long)>& after_step = {});

// Evaluation-form prediction for one sample, lifted to ground-truth
// resolution: metric depth (exponentiated), re-normalized unit normals,
// per-class probabilities — concatenated in that order for the combined task.
Tensor predict_full_res(Model& m, const Sample& s);

// Micro-averaged metrics over a dataset; predictions are resized to
// ground-truth resolution first. Only the block matching the model's task is
// populated.
struct MetricReport {
  Task task = Task::depth;
  int num_classes = 0;
  int samples = 0;
  DepthMetrics depth;
  NormalsMetrics normals;
  SegMetrics seg;
};
MetricReport evaluate(Model& m, const std::vector<Sample>& data);

// Report produced by scoring the ground truth against itself — the
// every-metric-perfect reference point for report plumbing.
MetricReport evaluate_ground_truth_echo(const std::vector<Sample>& data,
                                        Task task, int num_classes);

// ---------------------------------------------------------------------------
// Checkpoints: one file holding the model configuration, every parameter,
// the velocity buffers, and the generator state. Loading reconstructs
// training exactly — continuing from a checkpoint is bit-identical to never
// having stopped.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, Model& m,
                     const TrainState& state);

struct LoadedTraining {
  Model model;
  TrainState state;
};
LoadedTraining load_checkpoint(const std::string& path);

}  // namespace pixelmap
