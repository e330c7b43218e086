#include "pixelmap/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "pixelmap/config.hpp"
#include "pixelmap/data_io.hpp"
#include "pixelmap/errors.hpp"
#include "pixelmap/losses.hpp"
#include "pixelmap/ops.hpp"
#include "pixelmap/tape.hpp"

namespace pixelmap {

namespace {

void check_train_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.base_lr < 0.0) throw ConfigError("base_lr must be >= 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("momentum must lie in [0, 1)");
  if (cfg.lr_step_factor <= 0.0)
    throw ConfigError("lr_step_factor must be > 0");
  if (cfg.normals_lr_boost <= 0.0)
    throw ConfigError("normals_lr_boost must be > 0");
  if (cfg.crop_h < 0 || cfg.crop_w < 0)
    throw ConfigError("crop sizes must be >= 0 (0 picks the mid-grid size)");
}

void check_dataset(const Model& m, const std::vector<Sample>& data,
                   const char* where) {
  if (data.empty())
    throw InputError(std::string(where) + ": the dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    if (s.height() != m.config.input_h || s.width() != m.config.input_w)
      throw InputError(std::string(where) + ": sample " + std::to_string(i) +
                       " is " + std::to_string(s.width()) + "x" +
                       std::to_string(s.height()) + " but the model takes " +
                       std::to_string(m.config.input_w) + "x" +
                       std::to_string(m.config.input_h));
    if (m.config.task == Task::semantic) {
      for (int y = 0; y < s.labels.h; ++y)
        for (int x = 0; x < s.labels.w; ++x)
          if (s.mask.at(0, y, x) && s.labels.at(0, y, x) >= m.config.num_classes)
            throw InputError(std::string(where) + ": sample " +
                             std::to_string(i) + " carries class id " +
                             std::to_string(s.labels.at(0, y, x)) +
                             " but the model has " +
                             std::to_string(m.config.num_classes) + " classes");
    }
  }
}

bool wants(const ModelConfig& cfg, Modality m) {
  return std::find(cfg.input_modalities.begin(), cfg.input_modalities.end(),
                   m) != cfg.input_modalities.end();
}

// Network inputs for a list of samples: RGB as stored; ground-truth modality
// channels carry value x validity, so invalid pixels feed zeros.
BatchInputs gather_inputs(const Model& m,
                          const std::vector<const Sample*>& views) {
  const int n = static_cast<int>(views.size());
  const int h = m.config.input_h, w = m.config.input_w;
  const bool want_depth = wants(m.config, Modality::depth);
  const bool want_normals = wants(m.config, Modality::normals);
  BatchInputs in;
  in.rgb = Tensor::zeros({n, 3, h, w});
  if (want_depth) in.depth = Tensor::zeros({n, 1, h, w});
  if (want_normals) in.normals = Tensor::zeros({n, 3, h, w});
  for (int b = 0; b < n; ++b) {
    const Sample& s = *views[b];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c)
          in.rgb.at(b, c, y, x) = s.rgb.at(0, c, y, x);
        const double valid = s.mask.at(0, y, x) ? 1.0 : 0.0;
        if (want_depth)
          in.depth.at(b, 0, y, x) = s.depth.at(0, 0, y, x) * valid;
        if (want_normals)
          for (int c = 0; c < 3; ++c)
            in.normals.at(b, c, y, x) = s.normals.at(0, c, y, x) * valid;
      }
  }
  return in;
}

struct BatchTargets {
  Tensor depth;
  Tensor normals;
  LabelMap labels;
  Mask mask;
};

struct Slot {
  Sample owned;                  // augmented copy, when one was made
  const Sample* view = nullptr;  // the sample that feeds the network
  TrainTargets targets;
};

struct SlotPlan {
  int index = 0;
  AugmentParams params;
  bool augmented = false;
};

SlotPlan draw_plan(const std::vector<Sample>& data, const TrainConfig& cfg,
                   const Model& m, TrainState& state) {
  SlotPlan p;
  p.index = state.rng.uniform_int(0, static_cast<int>(data.size()) - 1);
  if (cfg.augment) {
    p.params = sample_params(state.rng, cfg.augment_config, m.config.input_w,
                             m.config.input_h);
    p.augmented = true;
  }
  return p;
}

// Pure per-slot work: resample the chosen sample and its grid targets. Safe
// to run on a pool; every output depends only on the plan.
void process_slot(const std::vector<Sample>& data, const SlotPlan& plan,
                  int gh, int gw, Slot& out) {
  if (plan.augmented && !plan.params.is_identity()) {
    out.owned = apply_augment(data[plan.index], plan.params);
    out.view = &out.owned;
  } else {
    out.view = &data[plan.index];
  }
  out.targets = make_targets(*out.view, gh, gw);
}

template <typename F>
void parallel_slots(int n, int workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(count);
  for (int t = 0; t < count; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Batch {
  BatchInputs inputs;
  BatchTargets targets;
};

BatchTargets gather_targets(const std::vector<Slot>& slots) {
  const int n = static_cast<int>(slots.size());
  const int gh = slots[0].targets.mask.h, gw = slots[0].targets.mask.w;
  BatchTargets t;
  t.depth = Tensor::zeros({n, 1, gh, gw});
  t.normals = Tensor::zeros({n, 3, gh, gw});
  t.labels = LabelMap(n, gh, gw);
  t.mask = Mask(n, gh, gw, 0);
  for (int b = 0; b < n; ++b) {
    const TrainTargets& s = slots[b].targets;
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        t.depth.at(b, 0, y, x) = s.depth.at(0, 0, y, x);
        for (int c = 0; c < 3; ++c)
          t.normals.at(b, c, y, x) = s.normals.at(0, c, y, x);
        t.labels.at(b, y, x) = s.labels.at(0, y, x);
        t.mask.at(b, y, x) = s.mask.at(0, y, x);
      }
  }
  return t;
}

// Draw, augment (possibly on a pool), and restack one minibatch with its
// targets at the (gh, gw) grid. Slots whose resampled mask came out empty are
// redrawn serially so the stream stays reproducible for any worker count.
Batch assemble_batch(const Model& m, const std::vector<Sample>& data,
                     const TrainConfig& cfg, TrainState& state, int gh,
                     int gw) {
  const int n = cfg.batch_size;
  std::vector<SlotPlan> plans(n);
  for (int i = 0; i < n; ++i) plans[i] = draw_plan(data, cfg, m, state);

  std::vector<Slot> slots(n);
  parallel_slots(n, cfg.workers,
                 [&](int i) { process_slot(data, plans[i], gh, gw, slots[i]); });

  for (int i = 0; i < n; ++i) {
    int tries = 0;
    while (slots[i].targets.mask.count_valid() == 0) {
      if (++tries > 100)
        throw TrainError("batch slot " + std::to_string(i) +
                         ": no draw produced a valid pixel in 100 attempts");
      process_slot(data, draw_plan(data, cfg, m, state), gh, gw, slots[i]);
    }
  }

  std::vector<const Sample*> views;
  views.reserve(n);
  for (const Slot& s : slots) views.push_back(s.view);
  Batch b;
  b.inputs = gather_inputs(m, views);
  b.targets = gather_targets(slots);
  return b;
}

// Median-frequency class weights over the whole (un-augmented) dataset.
const ClassWeights* prepare_weights(const Model& m,
                                    const std::vector<Sample>& data,
                                    const TrainConfig& cfg,
                                    ClassWeights* storage) {
  if (m.config.task != Task::semantic || !cfg.reweight_classes) return nullptr;
  std::vector<const LabelMap*> labels;
  std::vector<const Mask*> masks;
  for (const Sample& s : data) {
    labels.push_back(&s.labels);
    masks.push_back(&s.mask);
  }
  *storage = median_freq_weights(labels, masks, m.config.num_classes);
  return storage;
}

// Branch outputs are ordered like model.branches: a single branch for the
// plain tasks, depth then normals for the combined one (losses added with
// equal weight).
double batch_loss(Tape& tape, const Model& m, const std::vector<Tensor*>& outs,
                  const BatchTargets& t, const ClassWeights* weights) {
  switch (m.config.task) {
    case Task::depth:
      return depth_loss(tape, outs[0], t.depth, t.mask);
    case Task::normals:
      return normals_loss(tape, outs[0], t.normals, t.mask);
    case Task::semantic:
      return semantic_loss(tape, outs[0], t.labels, t.mask, weights);
    case Task::depth_normals:
      return depth_loss(tape, outs[0], t.depth, t.mask) +
             normals_loss(tape, outs[1], t.normals, t.mask);
  }
  throw ConfigError("unknown task");
}

BatchTargets crop_targets(const BatchTargets& t, int oy, int ox, int ch,
                          int cw) {
  const int n = t.mask.n;
  BatchTargets out;
  out.depth = Tensor::zeros({n, 1, ch, cw});
  out.normals = Tensor::zeros({n, 3, ch, cw});
  out.labels = LabelMap(n, ch, cw);
  out.mask = Mask(n, ch, cw, 0);
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        out.depth.at(b, 0, y, x) = t.depth.at(b, 0, oy + y, ox + x);
        for (int c = 0; c < 3; ++c)
          out.normals.at(b, c, y, x) = t.normals.at(b, c, oy + y, ox + x);
        out.labels.at(b, y, x) = t.labels.at(b, oy + y, ox + x);
        out.mask.at(b, y, x) = t.mask.at(b, oy + y, ox + x);
      }
  return out;
}

void clear_grads(const std::vector<Model::ParamRef>& params) {
  for (const auto& p : params) p.value->grad.clear();
}

// The losses score each image against its own pixel count, so a usable batch
// needs every image to keep at least one valid pixel.
bool every_image_has_valid(const Mask& m) {
  for (int b = 0; b < m.n; ++b) {
    bool any = false;
    for (int y = 0; y < m.h && !any; ++y)
      for (int x = 0; x < m.w; ++x)
        if (m.at(b, y, x)) {
          any = true;
          break;
        }
    if (!any) return false;
  }
  return true;
}

Tensor take_channels(const Tensor& t, int c0, int k) {
  Tensor out = Tensor::zeros({t.n(), k, t.h(), t.w()});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < k; ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
          out.at(n, c, y, x) = t.at(n, c0 + c, y, x);
  return out;
}

void renormalize_pixels(Tensor& t, int c0) {
  for (int n = 0; n < t.n(); ++n)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) {
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double v = t.at(n, c0 + c, y, x);
          sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > 0.0)
          for (int c = 0; c < 3; ++c) t.at(n, c0 + c, y, x) /= norm;
      }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule and update
// ---------------------------------------------------------------------------

TrainState make_state(const TrainConfig& cfg) {
  TrainState st;
  st.rng = Rng(cfg.seed);
  return st;
}

double lr_at_step(long step, const TrainConfig& cfg) {
  return step >= cfg.lr_step_at ? cfg.base_lr * cfg.lr_step_factor
                                : cfg.base_lr;
}

double effective_lr(long step, const TrainConfig& cfg, Task task) {
  const double lr = lr_at_step(step, cfg);
  return task == Task::normals ? lr * cfg.normals_lr_boost : lr;
}

void sgd_update(const std::vector<Model::ParamRef>& params, TrainState& state,
                double lr, double momentum) {
  for (const auto& p : params) {
    Tensor& w = *p.value;
    if (w.grad.size() != w.data.size())
      throw TrainError("no gradient for parameter " + p.name +
                       " (the backward pass never reached it)");
    for (double g : w.grad)
      if (!std::isfinite(g))
        throw TrainError("non-finite gradient in " + p.name);
    auto [it, inserted] = state.momentum.try_emplace(p.name);
    Tensor& v = it->second;
    if (inserted) v = Tensor::zeros(w.dims);
    if (v.dims != w.dims)
      throw TrainError("velocity shape mismatch for " + p.name);
    const double eff = lr * p.lr_mult;
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      v.data[i] = momentum * v.data[i] - eff * w.grad[i];
      w.data[i] += v.data[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Target resampling and resizing
// ---------------------------------------------------------------------------

TrainTargets make_targets(const Sample& s, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw InputError("make_targets: the grid must be at least 1x1");
  const int H = s.height(), W = s.width();
  TrainTargets t;
  t.depth = Tensor::zeros({1, 1, out_h, out_w});
  t.normals = Tensor::zeros({1, 3, out_h, out_w});
  t.labels = LabelMap(1, out_h, out_w);
  t.mask = Mask(1, out_h, out_w, 0);
  for (int y = 0; y < out_h; ++y) {
    const int sy =
        std::min(static_cast<int>((y + 0.5) * H / out_h), H - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx =
          std::min(static_cast<int>((x + 0.5) * W / out_w), W - 1);
      t.depth.at(0, 0, y, x) = s.depth.at(0, 0, sy, sx);
      for (int c = 0; c < 3; ++c)
        t.normals.at(0, c, y, x) = s.normals.at(0, c, sy, sx);
      t.labels.at(0, y, x) = s.labels.at(0, sy, sx);
      t.mask.at(0, y, x) = s.mask.at(0, sy, sx);
    }
  }
  return t;
}

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
  if (src.rank() != 4)
    throw InputError("resize_bilinear: input must be rank 4");
  if (out_h < 1 || out_w < 1)
    throw InputError("resize_bilinear: output must be at least 1x1");
  const int N = src.n(), C = src.c(), H = src.h(), W = src.w();

  struct Lerp {
    int i0, i1;
    double w1;
  };
  auto table = [](int in, int out) {
    std::vector<Lerp> t(out);
    for (int o = 0; o < out; ++o) {
      double s = (o + 0.5) * in / out - 0.5;
      if (s < 0.0) s = 0.0;
      if (s > in - 1) s = in - 1;
      int i0 = static_cast<int>(s);
      if (i0 > in - 2) i0 = in - 2;
      if (i0 < 0) i0 = 0;
      double w1 = s - i0;
      if (in == 1) w1 = 0.0;
      t[o] = {i0, std::min(i0 + 1, in - 1), w1};
    }
    return t;
  };
  const auto ty = table(H, out_h);
  const auto tx = table(W, out_w);

  Tensor out = Tensor::zeros({N, C, out_h, out_w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const double wy = ty[oy].w1, wx = tx[ox].w1;
          const double a = src.at(n, c, ty[oy].i0, tx[ox].i0) * (1 - wx) +
                           src.at(n, c, ty[oy].i0, tx[ox].i1) * wx;
          const double b = src.at(n, c, ty[oy].i1, tx[ox].i0) * (1 - wx) +
                           src.at(n, c, ty[oy].i1, tx[ox].i1) * wx;
          out.at(n, c, oy, ox) = a * (1 - wy) + b * wy;
        }
  return out;
}

// ---------------------------------------------------------------------------
// Phase 1
// ---------------------------------------------------------------------------

std::vector<LossPoint> train_phase1(
    Model& m, const std::vector<Sample>& data, const TrainConfig& cfg,
    TrainState& state, const std::function<void(long)>& after_step) {
  check_train_config(cfg);
  check_dataset(m, data, "train_phase1");
  ClassWeights weights;
  const ClassWeights* wp = prepare_weights(m, data, cfg, &weights);

  // everything the mid-grid loss reaches; the fine stack trains in phase 2
  std::set<std::string> fine;
  for (const auto& p : m.scale3_parameters()) fine.insert(p.name);
  std::vector<Model::ParamRef> params;
  for (const auto& p : m.parameters())
    if (!fine.count(p.name)) params.push_back(p);

  const int gh = m.plan.s2.h, gw = m.plan.s2.w;
  std::vector<LossPoint> curve;
  curve.reserve(static_cast<std::size_t>(std::max<long>(cfg.phase1_steps, 0)));
  for (long k = 0; k < cfg.phase1_steps; ++k) {
    Batch b = assemble_batch(m, data, cfg, state, gh, gw);
    clear_grads(params);
    Tape tape(true);
    auto outs = forward_train(tape, m, b.inputs, true, &state.rng, 2);
    const double loss = batch_loss(tape, m, outs, b.targets, wp);
    if (!std::isfinite(loss))
      throw TrainError("non-finite loss at step " + std::to_string(state.step));
    tape.backward();
    const double lr = effective_lr(state.step, cfg, m.config.task);
    sgd_update(params, state, lr, cfg.momentum);
    curve.push_back({state.step, loss, lr});
    state.last_loss = loss;
    ++state.step;
    if (after_step) after_step(state.step);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Phase 2
// ---------------------------------------------------------------------------

std::vector<LossPoint> train_phase2(
    Model& m, const std::vector<Sample>& data, const TrainConfig& cfg,
    TrainState& state, const std::function<void(long)>& after_step) {
  check_train_config(cfg);
  if (!m.has_scale(3))
    throw ConfigError(
        "the second training phase needs the fine scale configured");
  check_dataset(m, data, "train_phase2");
  ClassWeights weights;
  const ClassWeights* wp = prepare_weights(m, data, cfg, &weights);

  const int s3h = m.plan.s3.h, s3w = m.plan.s3.w;
  const int ch = cfg.crop_h > 0 ? cfg.crop_h : m.plan.s2.h;
  const int cw = cfg.crop_w > 0 ? cfg.crop_w : m.plan.s2.w;
  if (ch > s3h || cw > s3w)
    throw ConfigError("phase-2 window " + std::to_string(cw) + "x" +
                      std::to_string(ch) + " exceeds the fine grid " +
                      std::to_string(s3w) + "x" + std::to_string(s3h));

  auto params = m.scale3_parameters();
  std::vector<LossPoint> curve;
  curve.reserve(static_cast<std::size_t>(std::max<long>(cfg.phase2_steps, 0)));
  for (long k = 0; k < cfg.phase2_steps; ++k) {
    Batch b = assemble_batch(m, data, cfg, state, s3h, s3w);
    std::vector<Tensor> preds = scale2_predictions(m, b.inputs);

    int oy = 0, ox = 0;
    BatchTargets window;
    int tries = 0;
    do {
      if (++tries > 100)
        throw TrainError("no phase-2 window held a valid pixel in 100 draws "
                         "at step " +
                         std::to_string(state.step));
      oy = state.rng.uniform_int(0, s3h - ch);
      ox = state.rng.uniform_int(0, s3w - cw);
      window = crop_targets(b.targets, oy, ox, ch, cw);
    } while (!every_image_has_valid(window.mask));

    clear_grads(params);
    Tape tape(true);
    auto outs = forward_scale3_crop(tape, m, b.inputs, preds, oy, ox, ch, cw);
    const double loss = batch_loss(tape, m, outs, window, wp);
    if (!std::isfinite(loss))
      throw TrainError("non-finite loss at step " + std::to_string(state.step));
    tape.backward();
    const double lr = effective_lr(state.step, cfg, m.config.task);
    sgd_update(params, state, lr, cfg.momentum);
    curve.push_back({state.step, loss, lr});
    state.last_loss = loss;
    ++state.step;
    if (after_step) after_step(state.step);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

Tensor predict_full_res(Model& m, const Sample& s) {
  if (s.height() != m.config.input_h || s.width() != m.config.input_w)
    throw InputError("predict_full_res: sample is " +
                     std::to_string(s.width()) + "x" +
                     std::to_string(s.height()) + " but the model takes " +
                     std::to_string(m.config.input_w) + "x" +
                     std::to_string(m.config.input_h));
  BatchInputs in = gather_inputs(m, {&s});
  Tape tape(false);
  Tensor* out = forward_full(tape, m, in, false, nullptr);
  // depth interpolates in log space (the network's output form), so lifted
  // values stay positive and ratios blend geometrically
  Tensor up = resize_bilinear(*out, s.height(), s.width());
  switch (m.config.task) {
    case Task::depth:
      for (double& v : up.data) v = std::exp(v);
      break;
    case Task::normals:
      renormalize_pixels(up, 0);
      break;
    case Task::semantic:
      break;  // class probabilities; argmax is unaffected by resizing sums
    case Task::depth_normals:
      for (int y = 0; y < up.h(); ++y)
        for (int x = 0; x < up.w(); ++x)
          up.at(0, 0, y, x) = std::exp(up.at(0, 0, y, x));
      renormalize_pixels(up, 1);
      break;
  }
  return up;
}

MetricReport evaluate(Model& m, const std::vector<Sample>& data) {
  check_dataset(m, data, "evaluate");
  MetricReport r;
  r.task = m.config.task;
  r.num_classes = m.config.num_classes;
  r.samples = static_cast<int>(data.size());

  DepthAccumulator da;
  NormalsAccumulator na;
  SegAccumulator sa(std::max(2, m.config.num_classes));
  for (const Sample& s : data) {
    Tensor pred = predict_full_res(m, s);
    switch (m.config.task) {
      case Task::depth:
        da.add(pred, s.depth, s.mask);
        break;
      case Task::normals:
        na.add(pred, s.normals, s.mask);
        break;
      case Task::semantic:
        sa.add(argmax_labels(pred), s.labels, s.mask);
        break;
      case Task::depth_normals:
        da.add(take_channels(pred, 0, 1), s.depth, s.mask);
        na.add(take_channels(pred, 1, 3), s.normals, s.mask);
        break;
    }
  }
  if (m.config.task == Task::depth || m.config.task == Task::depth_normals)
    r.depth = da.result();
  if (m.config.task == Task::normals || m.config.task == Task::depth_normals)
    r.normals = na.result();
  if (m.config.task == Task::semantic) r.seg = sa.result();
  return r;
}

MetricReport evaluate_ground_truth_echo(const std::vector<Sample>& data,
                                        Task task, int num_classes) {
  if (data.empty())
    throw InputError("evaluate_ground_truth_echo: the dataset is empty");
  MetricReport r;
  r.task = task;
  r.num_classes = num_classes;
  r.samples = static_cast<int>(data.size());

  DepthAccumulator da;
  NormalsAccumulator na;
  SegAccumulator sa(std::max(2, num_classes));
  for (const Sample& s : data) {
    if (task == Task::depth || task == Task::depth_normals)
      da.add(s.depth, s.depth, s.mask);
    if (task == Task::normals || task == Task::depth_normals)
      na.add(s.normals, s.normals, s.mask);
    if (task == Task::semantic) sa.add(s.labels, s.labels, s.mask);
  }
  if (task == Task::depth || task == Task::depth_normals) r.depth = da.result();
  if (task == Task::normals || task == Task::depth_normals)
    r.normals = na.result();
  if (task == Task::semantic) r.seg = sa.result();
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// One little-endian container:
//   "PMCK" | version u8 | u32 config text length + bytes | u32 state text
//   length + bytes | u32 tensor count | per tensor: u16 name length + name,
//   u8 rank, rank x i32 dims, numel x f64 payload.
// Parameters appear in model order, then velocity buffers as
// "momentum.<parameter>". Doubles travel as raw bits, so a reload is exact.
// ---------------------------------------------------------------------------

namespace {

void push_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void push_f64(std::vector<std::uint8_t>& out, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

void push_named_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                       const Tensor& t) {
  if (name.size() > 0xffff)
    throw InputError("checkpoint tensor name too long: " + name);
  push_u16(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (int d : t.dims) push_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data) push_f64(out, v);
}

struct ByteReader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > b.size())
      throw FormatError(std::string("checkpoint truncated reading ") + what,
                        pos);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(b.begin() + static_cast<std::ptrdiff_t>(pos),
                  b.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
};

constexpr char kCheckpointMagic[4] = {'P', 'M', 'C', 'K'};
constexpr std::uint8_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, Model& m,
                     const TrainState& state) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  out.push_back(kCheckpointVersion);

  Config cfg_text;
  write_model_config(cfg_text, m.config);
  const std::string config_block = cfg_text.echo();
  push_u32(out, static_cast<std::uint32_t>(config_block.size()));
  out.insert(out.end(), config_block.begin(), config_block.end());

  Config state_text;
  state_text.set("state.step", std::to_string(state.step));
  {
    std::ostringstream loss;
    loss.precision(17);
    loss << state.last_loss;
    state_text.set("state.last_loss", loss.str());
  }
  state_text.set("state.rng", state.rng.save_state());
  const std::string state_block = state_text.echo();
  push_u32(out, static_cast<std::uint32_t>(state_block.size()));
  out.insert(out.end(), state_block.begin(), state_block.end());

  const auto params = m.parameters();
  push_u32(out,
           static_cast<std::uint32_t>(params.size() + state.momentum.size()));
  for (const auto& p : params) push_named_tensor(out, p.name, *p.value);
  for (const auto& [name, v] : state.momentum)
    push_named_tensor(out, "momentum." + name, v);

  write_file_bytes(path, out);
}

LoadedTraining load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  ByteReader r{bytes};

  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("bad checkpoint magic", 0);
  r.pos = 4;
  if (r.u8("version") != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version", 4);

  const std::uint32_t config_len = r.u32("config length");
  const std::string config_block = r.text(config_len, "config text");
  const ModelConfig model_cfg =
      model_config_from(Config::from_text(config_block));

  const std::uint32_t state_len = r.u32("state length");
  const std::string state_block = r.text(state_len, "state text");
  const Config state_cfg = Config::from_text(state_block);

  TrainState state;
  state.step = state_cfg.get_long("state.step", 0);
  state.last_loss = state_cfg.get_double("state.last_loss", 0.0);
  state.rng.load_state(state_cfg.get_str("state.rng", ""));

  Rng init(0);  // placeholder draws; every parameter is overwritten below
  Model model = build_model(model_cfg, init);

  std::map<std::string, std::pair<Tensor, std::size_t>> stored;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos;
    const std::uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.text(name_len, "tensor name");
    const int rank = r.u8("tensor rank");
    if (rank < 1 || rank > 4)
      throw FormatError("tensor rank out of range for " + name, at);
    std::vector<int> dims(rank);
    std::size_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      dims[d] = static_cast<int>(r.u32("tensor dims"));
      if (dims[d] < 1) throw FormatError("bad dimension for " + name, at);
      numel *= static_cast<std::size_t>(dims[d]);
    }
    Tensor t = Tensor::zeros(dims);
    for (std::size_t k = 0; k < numel; ++k) t.data[k] = r.f64("tensor payload");
    if (!stored.emplace(name, std::make_pair(std::move(t), at)).second)
      throw FormatError("duplicate tensor " + name, at);
  }
  if (r.pos != bytes.size())
    throw FormatError("trailing bytes after the last tensor", r.pos);

  for (const auto& p : model.parameters()) {
    auto it = stored.find(p.name);
    if (it == stored.end())
      throw FormatError("checkpoint lacks parameter " + p.name, bytes.size());
    Tensor& t = it->second.first;
    if (t.dims != p.value->dims)
      throw FormatError("shape mismatch for " + p.name, it->second.second);
    p.value->data = std::move(t.data);
    stored.erase(it);
  }
  for (auto& [name, entry] : stored) {
    if (name.rfind("momentum.", 0) != 0)
      throw FormatError("unknown tensor " + name, entry.second);
    state.momentum.emplace(name.substr(9), std::move(entry.first));
  }
  return LoadedTraining{std::move(model), std::move(state)};
}

}  // namespace pixelmap
