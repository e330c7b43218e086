#pragma once

#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pixelmap/ops.hpp"
#include "pixelmap/rng.hpp"
#include "pixelmap/sample.hpp"
#include "pixelmap/tape.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// ---------------------------------------------------------------------------
// Three-scale architecture for dense pixel maps.
//
//   Scale 1 (full view): a conv/pool stack over the center-trimmed image,
//     then two fully connected layers; the second reshapes to a coarse
//     feature map at ~1/16 scale that is bilinearly upsampled to the
//     mid-scale grid. Runs on RGB only.
//   Scale 2 (mid): one stride-2 9x9 conv + pool per input modality,
//     concatenated with the upsampled coarse features, then same-padded 5x5
//     convs ending in a linear C-channel head.
//   Scale 3 (fine): a stride-2 9x9 conv per modality concatenated with the
//     x2-upsampled scale-2 prediction, then 5x5 convs and a linear head, at
//     twice the mid-scale resolution.
//
// Working sizes are derived from the input size: the mid-scale grid is
// round(0.23 * input) clamped to what the image branch yields, and the fine
// grid is 2x mid minus one. Larger branch maps are center-cropped (floored
// offsets). All randomness is seeded; eval mode is deterministic.
// ---------------------------------------------------------------------------

enum class Task { depth, normals, semantic, depth_normals };
enum class Modality { rgb, depth, normals };

// prediction channels: 1 depth, 3 normals, K semantic, 4 combined
int task_channels(Task task, int num_classes);

// One numbered block of the full-view stack: `repeats` convolutions (same
// geometry) each followed by relu, then an optional 3x3 stride-2 max pool.
// Channel counts are pre-multiplier.
struct CoarseBlock {
  int channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int repeats = 1;
  bool pool = true;
  bool operator==(const CoarseBlock&) const = default;
};

std::vector<CoarseBlock> alexnet_stack();  // 11/5/3/3/3, pools after 1,2,5
std::vector<CoarseBlock> vgg_stack();      // 3x3 blocks of 2-3 convs, all pooled
std::vector<CoarseBlock> tiny_stack();     // two 3x3 blocks; fits 8x6 inputs

struct ModelConfig {
  int input_h = 48, input_w = 64;
  Task task = Task::depth;
  int num_classes = 0;  // semantic task only
  std::vector<int> scales = {1, 2, 3};
  double width_multiplier = 1.0;
  std::vector<CoarseBlock> coarse_stack = alexnet_stack();
  std::vector<Modality> input_modalities = {Modality::rgb};
  double dropout_rate = 0.5;  // drop probability at the first full layer
  double fc6_lr = 0.1, fc7_lr = 0.1;
  int fc6_units = 4096;             // pre-multiplier
  int coarse_feature_channels = 64;  // pre-multiplier
  int refine_channels = 64;          // pre-multiplier
  int entry_filters_single = 96;     // sole-modality 9x9 conv
  int entry_filters_multi = 32;      // per-modality 9x9 convs
  std::map<std::string, double> lr_overrides;  // final say on any layer's rate

  int channels_out() const { return task_channels(task, num_classes); }
};

// Published per-task settings: full-layer rates 0.1/0.1 and dropout 0.5 for
// depth and normals; 1.0/0.01 and 0.8 for semantic labeling.
void apply_task_presets(ModelConfig& cfg);

struct PlannedSize {
  int w = 0, h = 0;
  bool operator==(const PlannedSize&) const = default;
};

struct CoarsePlanEntry {
  PlannedSize conv;             // after the block's convolutions
  PlannedSize out;              // after the pool (== conv when none)
  int pool_win_h = 0, pool_win_w = 0;  // clamped window; 0 when no pool
};

// Every spatial size and crop offset, fixed at build time. The planner
// rejects configurations whose maps collapse below 1x1, naming the layer.
struct ArchPlan {
  int trim_x = 0, trim_y = 0;  // centered input trim, per side
  PlannedSize trimmed;
  std::vector<CoarsePlanEntry> coarse;
  int fc6_in = 0;
  PlannedSize s17;        // coarse feature map emitted by the second full layer
  int upsample_factor = 1;
  PlannedSize coarse_up;  // s17 upsampled
  int up_crop_x = 0, up_crop_y = 0;    // coarse_up -> s2
  PlannedSize s2_conv, s2_pool;        // mid image branch, before crop
  int s2_pool_win_h = 0, s2_pool_win_w = 0;
  int s2_crop_x = 0, s2_crop_y = 0;    // s2_pool -> s2
  PlannedSize s2;
  PlannedSize s3_conv;                 // fine image branch, before crop
  int s3_crop_x = 0, s3_crop_y = 0;    // s3_conv -> s3
  PlannedSize s3;                      // 2*s2 - 1
  PlannedSize output;                  // final prediction map
};

ArchPlan plan_architecture(const ModelConfig& cfg);

// Scale-2/3 layers of one prediction branch. Single-task models have one
// branch with an empty name; the combined depth+normals model has two,
// named "depth" and "normals", which share the scale-1 stack.
struct RefineBranch {
  std::string name;
  int channels_out = 0;
  LinearSpec s1_head;              // scale-1-only: replaces the feature layer
  std::deque<ConvSpec> s2_entry;   // one per modality, in modality order
  std::deque<ConvSpec> s2_mid;
  ConvSpec s2_head;
  std::deque<ConvSpec> s3_entry;
  std::deque<ConvSpec> s3_mid;
  ConvSpec s3_head;
};

struct Model {
  ModelConfig config;
  ArchPlan plan;
  std::deque<ConvSpec> coarse_convs;  // flattened blocks, in order
  LinearSpec fc6, fc7;                // fc7 absent in the scale-1-only setup
  std::vector<RefineBranch> branches;

  struct ParamRef {
    std::string name;  // layer name + ".w" / ".b"
    Tensor* value = nullptr;
    double lr_mult = 1.0;
  };
  // Deterministic order: scale-1 stack, then each branch scale-2 then
  // scale-3. Checkpoints and the optimizer key off these names.
  std::vector<ParamRef> parameters();
  std::vector<ParamRef> scale3_parameters();  // the trainable set of phase two

  bool has_scale(int s) const;
};

Model build_model(const ModelConfig& cfg, Rng& rng);

// One batch of network inputs. Only the tensors for configured modalities
// are read; each must be (n, channels, input_h, input_w).
struct BatchInputs {
  Tensor rgb;      // (n, 3, h, w)
  Tensor depth;    // (n, 1, h, w)
  Tensor normals;  // (n, 3, h, w)
};

// Per-branch head outputs in training form: log-depth map, unit-normalized
// normal vectors, or pre-softmax class scores. `rng` is only needed when
// training with a nonzero dropout rate. through_scale 2 stops at the mid
// prediction (the first training phase puts its loss there); 0 runs every
// configured scale.
std::vector<Tensor*> forward_train(Tape& tape, Model& m, const BatchInputs& in,
                                   bool training, Rng* rng = nullptr,
                                   int through_scale = 0);

// Final prediction: log depth / unit normals / class probabilities, branch
// outputs concatenated along channels for the combined task.
Tensor* forward_full(Tape& tape, Model& m, const BatchInputs& in, bool training,
                     Rng* rng = nullptr);

// Convenience for the combined task: (log-depth map, unit normal map).
std::pair<Tensor*, Tensor*> shared_trunk_forward(Tape& tape, Model& m,
                                                 const BatchInputs& in,
                                                 bool training, Rng* rng = nullptr);

// Runs scales 1-2 without recording and returns each branch's scale-3 input:
// the training-form mid prediction upsampled x2 and cropped to the fine
// grid. The result carries no gradient history (those scales are frozen in
// the second training phase).
std::vector<Tensor> scale2_predictions(Model& m, const BatchInputs& in);

// Scale-3 stack over the window [oy, oy+crop_h) x [ox, ox+crop_w) of the
// fine grid. The image window is cut to line up exactly with the full path:
// a window covering the whole fine grid reproduces the full forward output
// bit for bit, and smaller windows agree on the interior more than 6 pixels
// from the window border (three 5x5 convolutions of zero-padding skew).
std::vector<Tensor*> forward_scale3_crop(Tape& tape, Model& m,
                                         const BatchInputs& in,
                                         const std::vector<Tensor>& s2_pred_fine,
                                         int oy, int ox, int crop_h, int crop_w);

}  // namespace pixelmap
