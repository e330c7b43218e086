#include "pixelmap/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pixelmap/errors.hpp"
#include "pixelmap/ops.hpp"

namespace pixelmap {

namespace {

int iround(double v) { return static_cast<int>(std::lround(v)); }

// every internal channel count scales with the width multiplier, floored at 1
int scaled(int channels, double mult) { return std::max(1, iround(channels * mult)); }

int modality_channels(Modality m) {
  switch (m) {
    case Modality::rgb: return 3;
    case Modality::depth: return 1;
    case Modality::normals: return 3;
  }
  return 0;
}

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::depth: return "depth";
    case Modality::normals: return "normals";
  }
  return "?";
}

// blocks with repeated convolutions letter their layers: s1_conv3a, s1_conv3b
std::string coarse_conv_name(std::size_t block, int repeat, int repeats) {
  std::string name = "s1_conv" + std::to_string(block + 1);
  if (repeats > 1) name += static_cast<char>('a' + repeat);
  return name;
}

bool contains_scale(const ModelConfig& cfg, int s) {
  return std::find(cfg.scales.begin(), cfg.scales.end(), s) != cfg.scales.end();
}

void validate_config(const ModelConfig& cfg) {
  if (cfg.input_w < 1 || cfg.input_h < 1)
    throw ConfigError("input size must be positive");
  if (cfg.task == Task::semantic && cfg.num_classes < 2)
    throw ConfigError("semantic labeling needs at least two classes");

  std::vector<int> s = cfg.scales;
  std::sort(s.begin(), s.end());
  const bool ok = s == std::vector<int>{1} || s == std::vector<int>{2} ||
                  s == std::vector<int>{1, 2} || s == std::vector<int>{1, 2, 3};
  if (!ok) throw ConfigError("scales must be {1}, {2}, {1,2} or {1,2,3}");

  if (!(cfg.width_multiplier > 0.0))
    throw ConfigError("width multiplier must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");

  if (cfg.input_modalities.empty())
    throw ConfigError("at least one input modality is required");
  std::set<Modality> seen;
  for (Modality m : cfg.input_modalities)
    if (!seen.insert(m).second) throw ConfigError("duplicate input modality");
  if (!seen.count(Modality::rgb)) throw ConfigError("rgb input is mandatory");

  if (cfg.fc6_units < 1 || cfg.coarse_feature_channels < 1 ||
      cfg.refine_channels < 1 || cfg.entry_filters_single < 1 ||
      cfg.entry_filters_multi < 1)
    throw ConfigError("channel counts must be positive");

  if (contains_scale(cfg, 1)) {
    if (cfg.coarse_stack.empty())
      throw ConfigError("the full-view stack needs at least one block");
    for (const CoarseBlock& b : cfg.coarse_stack)
      if (b.channels < 1 || b.kernel < 1 || b.stride < 1 || b.pad < 0 || b.repeats < 1)
        throw ConfigError("malformed full-view stack block");
  }
}

// conv output size with an explicit can-the-kernel-cover check; the plain
// integer formula would round a negative overlap up to a bogus positive size
int conv_fit(int n, int k, int stride, int pad, const std::string& layer, char axis) {
  if (n + 2 * pad < k) {
    std::ostringstream os;
    os << layer << ": " << k << "-wide kernel cannot cover " << n << " pixels ("
       << axis << " axis)";
    throw ConfigError(os.str());
  }
  return conv_out_size(n, k, stride, pad);
}

Task branch_task(const ModelConfig& cfg, const RefineBranch& br) {
  if (cfg.task != Task::depth_normals) return cfg.task;
  return br.name == "depth" ? Task::depth : Task::normals;
}

const Tensor& modality_tensor(const BatchInputs& in, Modality m) {
  switch (m) {
    case Modality::depth: return in.depth;
    case Modality::normals: return in.normals;
    default: return in.rgb;
  }
}

// check every configured modality tensor and return the batch size
int check_inputs(const Model& m, const BatchInputs& in) {
  const ModelConfig& cfg = m.config;
  int n = 0;
  for (Modality mod : cfg.input_modalities) {
    const Tensor& t = modality_tensor(in, mod);
    const int ch = modality_channels(mod);
    if (t.rank() != 4 || t.c() != ch || t.h() != cfg.input_h ||
        t.w() != cfg.input_w || t.n() < 1) {
      throw InputError(std::string("input for modality ") + modality_name(mod) +
                       " must be (n, " + std::to_string(ch) + ", " +
                       std::to_string(cfg.input_h) + ", " +
                       std::to_string(cfg.input_w) + "); got " + t.shape_str());
    }
    if (n == 0) {
      n = t.n();
    } else if (t.n() != n) {
      throw InputError("modality batch sizes disagree");
    }
  }
  return n;
}

// everything the prediction branches consume
struct Staged {
  std::vector<Tensor*> trimmed;    // per modality, config order
  Tensor* dropped = nullptr;       // first full layer after relu + dropout
  Tensor* coarse_feats = nullptr;  // full-view features at the mid grid
};

Staged run_shared(Tape& tape, Model& m, const BatchInputs& in, bool training,
                  Rng* rng) {
  const ModelConfig& cfg = m.config;
  const ArchPlan& p = m.plan;
  check_inputs(m, in);
  const bool wants_dropout =
      training && m.has_scale(1) && cfg.dropout_rate > 0.0;
  if (wants_dropout && rng == nullptr)
    throw InputError("training-mode forward needs an rng for dropout");

  Staged st;
  Tensor* rgb_trim = nullptr;
  for (Modality mod : cfg.input_modalities) {
    Tensor* t = tape.track(modality_tensor(in, mod));
    Tensor* c = crop_spatial(tape, t, p.trim_y, p.trim_x, p.trimmed.h, p.trimmed.w);
    st.trimmed.push_back(c);
    if (mod == Modality::rgb) rgb_trim = c;
  }
  if (!m.has_scale(1)) return st;

  // full-view stack runs on rgb alone
  Tensor* x = rgb_trim;
  std::size_t ci = 0;
  for (std::size_t b = 0; b < cfg.coarse_stack.size(); ++b) {
    const CoarseBlock& blk = cfg.coarse_stack[b];
    for (int r = 0; r < blk.repeats; ++r)
      x = relu(tape, conv2d(tape, x, m.coarse_convs[ci++]));
    if (blk.pool)
      x = maxpool_rect(tape, x, p.coarse[b].pool_win_h, p.coarse[b].pool_win_w, 2);
  }
  x = relu(tape, linear(tape, x, m.fc6));
  st.dropped = wants_dropout ? dropout(tape, x, cfg.dropout_rate, *rng, true) : x;

  if (m.has_scale(2)) {
    Tensor* f = linear(tape, st.dropped, m.fc7);
    const int n = f->dims[0];
    const int cf = m.fc7.out / (p.s17.h * p.s17.w);
    f = reshape(tape, f, {n, cf, p.s17.h, p.s17.w});
    f = upsample_bilinear(tape, f, p.upsample_factor);
    st.coarse_feats = crop_spatial(tape, f, p.up_crop_y, p.up_crop_x, p.s2.h, p.s2.w);
  }
  return st;
}

// emitted maps carry the training form per task; normals come out unit length
Tensor* to_training_form(Tape& tape, const ModelConfig& cfg,
                         const RefineBranch& br, Tensor* x) {
  return branch_task(cfg, br) == Task::normals ? l2_normalize_pixels(tape, x) : x;
}

// single-scale ablation: a linear head emits the map directly at the coarse
// feature resolution and rides the same upsample-and-crop to the mid grid
Tensor* branch_scale1_head(Tape& tape, Model& m, RefineBranch& br, const Staged& st) {
  const ArchPlan& p = m.plan;
  Tensor* hm = linear(tape, st.dropped, br.s1_head);
  const int n = hm->dims[0];
  Tensor* f = reshape(tape, hm, {n, br.channels_out, p.s17.h, p.s17.w});
  f = upsample_bilinear(tape, f, p.upsample_factor);
  return crop_spatial(tape, f, p.up_crop_y, p.up_crop_x, p.s2.h, p.s2.w);
}

Tensor* branch_scale2(Tape& tape, Model& m, RefineBranch& br, const Staged& st) {
  const ArchPlan& p = m.plan;
  std::vector<Tensor*> cat;
  for (std::size_t i = 0; i < br.s2_entry.size(); ++i) {
    Tensor* e = relu(tape, conv2d(tape, st.trimmed[i], br.s2_entry[i]));
    e = maxpool_rect(tape, e, p.s2_pool_win_h, p.s2_pool_win_w, 2);
    e = crop_spatial(tape, e, p.s2_crop_y, p.s2_crop_x, p.s2.h, p.s2.w);
    cat.push_back(e);
  }
  if (st.coarse_feats != nullptr) cat.push_back(st.coarse_feats);
  Tensor* x = concat_channels(tape, cat);
  for (auto& mid : br.s2_mid) x = relu(tape, conv2d(tape, x, mid));
  return conv2d(tape, x, br.s2_head);
}

Tensor* branch_scale3(Tape& tape, Model& m, RefineBranch& br, const Staged& st,
                      Tensor* pred2_train) {
  const ArchPlan& p = m.plan;
  Tensor* up = upsample_bilinear(tape, pred2_train, 2);
  up = crop_spatial(tape, up, 0, 0, p.s3.h, p.s3.w);
  std::vector<Tensor*> cat;
  for (std::size_t i = 0; i < br.s3_entry.size(); ++i) {
    Tensor* e = relu(tape, conv2d(tape, st.trimmed[i], br.s3_entry[i]));
    e = crop_spatial(tape, e, p.s3_crop_y, p.s3_crop_x, p.s3.h, p.s3.w);
    cat.push_back(e);
  }
  cat.push_back(up);
  Tensor* x = concat_channels(tape, cat);
  for (auto& mid : br.s3_mid) x = relu(tape, conv2d(tape, x, mid));
  return conv2d(tape, x, br.s3_head);
}

}  // namespace

int task_channels(Task task, int num_classes) {
  switch (task) {
    case Task::depth: return 1;
    case Task::normals: return 3;
    case Task::semantic: return num_classes;
    case Task::depth_normals: return 4;
  }
  return 0;
}

std::vector<CoarseBlock> alexnet_stack() {
  return {{96, 11, 4, 0, 1, true},
          {256, 5, 1, 2, 1, true},
          {384, 3, 1, 1, 1, false},
          {384, 3, 1, 1, 1, false},
          {256, 3, 1, 1, 1, true}};
}

std::vector<CoarseBlock> vgg_stack() {
  return {{64, 3, 1, 1, 2, true},
          {128, 3, 1, 1, 2, true},
          {256, 3, 1, 1, 3, true},
          {512, 3, 1, 1, 3, true},
          {512, 3, 1, 1, 3, true}};
}

std::vector<CoarseBlock> tiny_stack() {
  return {{32, 3, 1, 1, 1, true}, {64, 3, 1, 1, 1, true}};
}

void apply_task_presets(ModelConfig& cfg) {
  if (cfg.task == Task::semantic) {
    cfg.fc6_lr = 1.0;
    cfg.fc7_lr = 0.01;
    cfg.dropout_rate = 0.8;
  } else {
    cfg.fc6_lr = 0.1;
    cfg.fc7_lr = 0.1;
    cfg.dropout_rate = 0.5;
  }
}

ArchPlan plan_architecture(const ModelConfig& cfg) {
  validate_config(cfg);
  ArchPlan p;
  // a thin border carries little signal and trimming it keeps the working
  // sizes aligned across resolutions: one part in 80 (x) / 60 (y) per side
  p.trim_x = iround(cfg.input_w / 80.0);
  p.trim_y = iround(cfg.input_h / 60.0);
  p.trimmed = {cfg.input_w - 2 * p.trim_x, cfg.input_h - 2 * p.trim_y};
  if (p.trimmed.w < 1 || p.trimmed.h < 1)
    throw ConfigError("input is smaller than the border trim");

  if (contains_scale(cfg, 1)) {
    int w = p.trimmed.w, h = p.trimmed.h;
    for (std::size_t b = 0; b < cfg.coarse_stack.size(); ++b) {
      const CoarseBlock& blk = cfg.coarse_stack[b];
      CoarsePlanEntry e;
      for (int r = 0; r < blk.repeats; ++r) {
        const std::string name = coarse_conv_name(b, r, blk.repeats);
        w = conv_fit(w, blk.kernel, blk.stride, blk.pad, name, 'x');
        h = conv_fit(h, blk.kernel, blk.stride, blk.pad, name, 'y');
      }
      e.conv = {w, h};
      if (blk.pool) {
        // the 3x3 stride-2 window shrinks to fit maps smaller than itself
        e.pool_win_w = std::min(3, w);
        e.pool_win_h = std::min(3, h);
        w = pool_out_size(w, e.pool_win_w, 2);
        h = pool_out_size(h, e.pool_win_h, 2);
      }
      e.out = {w, h};
      p.coarse.push_back(e);
    }
    p.fc6_in = scaled(cfg.coarse_stack.back().channels, cfg.width_multiplier) * w * h;
    p.s17 = {std::max(1, cfg.input_w / 16 - 1), std::max(1, cfg.input_h / 16 - 1)};
  }

  // the mid grid is just under a quarter of the input in each direction,
  // clamped to what the 9x9 stride-2 branch plus pool actually yields
  p.s2_conv = {conv_fit(p.trimmed.w, 9, 2, 4, "s2_entry", 'x'),
               conv_fit(p.trimmed.h, 9, 2, 4, "s2_entry", 'y')};
  p.s2_pool_win_w = std::min(3, p.s2_conv.w);
  p.s2_pool_win_h = std::min(3, p.s2_conv.h);
  p.s2_pool = {pool_out_size(p.s2_conv.w, p.s2_pool_win_w, 2),
               pool_out_size(p.s2_conv.h, p.s2_pool_win_h, 2)};
  p.s2 = {std::min(std::max(1, iround(0.23 * cfg.input_w)), p.s2_pool.w),
          std::min(std::max(1, iround(0.23 * cfg.input_h)), p.s2_pool.h)};
  p.s2_crop_x = (p.s2_pool.w - p.s2.w) / 2;
  p.s2_crop_y = (p.s2_pool.h - p.s2.h) / 2;

  if (contains_scale(cfg, 1)) {
    // smallest integer factor that covers the mid grid in both directions
    p.upsample_factor = std::max((p.s2.w + p.s17.w - 1) / p.s17.w,
                                 (p.s2.h + p.s17.h - 1) / p.s17.h);
    p.coarse_up = {p.s17.w * p.upsample_factor, p.s17.h * p.upsample_factor};
    p.up_crop_x = (p.coarse_up.w - p.s2.w) / 2;
    p.up_crop_y = (p.coarse_up.h - p.s2.h) / 2;
  }

  if (contains_scale(cfg, 3)) {
    p.s3_conv = p.s2_conv;  // same 9x9 stride-2 geometry, no pool
    p.s3 = {2 * p.s2.w - 1, 2 * p.s2.h - 1};
    p.s3_crop_x = (p.s3_conv.w - p.s3.w) / 2;
    p.s3_crop_y = (p.s3_conv.h - p.s3.h) / 2;
    p.output = p.s3;
  } else {
    p.output = p.s2;
  }
  return p;
}

std::vector<Model::ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  auto add_conv = [&out](ConvSpec& c) {
    out.push_back({c.name + ".w", &c.w, c.lr_mult});
    out.push_back({c.name + ".b", &c.b, c.lr_mult});
  };
  auto add_linear = [&out](LinearSpec& l) {
    out.push_back({l.name + ".w", &l.w, l.lr_mult});
    out.push_back({l.name + ".b", &l.b, l.lr_mult});
  };
  const bool s1 = has_scale(1), s2 = has_scale(2), s3 = has_scale(3);
  for (auto& c : coarse_convs) add_conv(c);
  if (s1) {
    add_linear(fc6);
    if (s2) add_linear(fc7);
  }
  for (auto& br : branches) {
    if (s1 && !s2) add_linear(br.s1_head);
    for (auto& c : br.s2_entry) add_conv(c);
    for (auto& c : br.s2_mid) add_conv(c);
    if (s2) add_conv(br.s2_head);
    for (auto& c : br.s3_entry) add_conv(c);
    for (auto& c : br.s3_mid) add_conv(c);
    if (s3) add_conv(br.s3_head);
  }
  return out;
}

std::vector<Model::ParamRef> Model::scale3_parameters() {
  std::vector<ParamRef> out;
  if (!has_scale(3)) return out;
  auto add_conv = [&out](ConvSpec& c) {
    out.push_back({c.name + ".w", &c.w, c.lr_mult});
    out.push_back({c.name + ".b", &c.b, c.lr_mult});
  };
  for (auto& br : branches) {
    for (auto& c : br.s3_entry) add_conv(c);
    for (auto& c : br.s3_mid) add_conv(c);
    add_conv(br.s3_head);
  }
  return out;
}

bool Model::has_scale(int s) const { return contains_scale(config, s); }

Model build_model(const ModelConfig& cfg_in, Rng& rng) {
  Model m;
  m.config = cfg_in;
  m.plan = plan_architecture(m.config);
  const ModelConfig& cfg = m.config;
  const ArchPlan& p = m.plan;
  const double wm = cfg.width_multiplier;
  const bool s1 = contains_scale(cfg, 1);
  const bool s2 = contains_scale(cfg, 2);
  const bool s3 = contains_scale(cfg, 3);

  const int cf = scaled(cfg.coarse_feature_channels, wm);
  const int fc6_units = scaled(cfg.fc6_units, wm);
  const int refine = scaled(cfg.refine_channels, wm);
  const int entry_filters = scaled(cfg.input_modalities.size() == 1
                                       ? cfg.entry_filters_single
                                       : cfg.entry_filters_multi,
                                   wm);

  // overrides win over presets; stray keys are config mistakes
  std::set<std::string> unused_overrides;
  for (const auto& kv : cfg.lr_overrides) unused_overrides.insert(kv.first);
  auto lr_for = [&](const std::string& layer, double preset) {
    auto it = cfg.lr_overrides.find(layer);
    if (it == cfg.lr_overrides.end()) return preset;
    unused_overrides.erase(layer);
    return it->second;
  };

  if (s1) {
    int in_ch = 3;
    for (std::size_t b = 0; b < cfg.coarse_stack.size(); ++b) {
      const CoarseBlock& blk = cfg.coarse_stack[b];
      const int out_ch = scaled(blk.channels, wm);
      for (int r = 0; r < blk.repeats; ++r) {
        const std::string name = coarse_conv_name(b, r, blk.repeats);
        m.coarse_convs.push_back(make_conv(name, in_ch, out_ch, blk.kernel,
                                           blk.stride, blk.pad, rng,
                                           lr_for(name, 1.0)));
        in_ch = out_ch;
      }
    }
    m.fc6 = make_linear("s1_fc6", p.fc6_in, fc6_units, rng,
                        lr_for("s1_fc6", cfg.fc6_lr));
    if (s2) {
      m.fc7 = make_linear("s1_fc7", fc6_units, cf * p.s17.h * p.s17.w, rng,
                          lr_for("s1_fc7", cfg.fc7_lr));
    }
  }

  std::vector<std::pair<std::string, int>> branch_defs;
  if (cfg.task == Task::depth_normals) {
    branch_defs = {{"depth", 1}, {"normals", 3}};
  } else {
    branch_defs = {{"", cfg.channels_out()}};
  }

  for (const auto& [bname, ch_out] : branch_defs) {
    RefineBranch br;
    br.name = bname;
    br.channels_out = ch_out;
    const std::string prefix = bname.empty() ? std::string() : bname + ".";

    if (s1 && !s2) {
      const std::string name = prefix + "s1_head";
      br.s1_head = make_linear(name, fc6_units, ch_out * p.s17.h * p.s17.w, rng,
                               lr_for(name, cfg.fc7_lr));
    }
    if (s2) {
      int cat = 0;
      for (Modality mod : cfg.input_modalities) {
        const std::string name = prefix + "s2_entry_" + modality_name(mod);
        br.s2_entry.push_back(make_conv(name, modality_channels(mod),
                                        entry_filters, 9, 2, 4, rng,
                                        lr_for(name, 1.0)));
        cat += entry_filters;
      }
      if (s1) cat += cf;
      int in_c = cat;
      for (int i = 0; i < 3; ++i) {
        const std::string name = prefix + "s2_mid" + std::to_string(i + 1);
        br.s2_mid.push_back(
            make_conv(name, in_c, refine, 5, 1, 2, rng, lr_for(name, 10.0)));
        in_c = refine;
      }
      const std::string hname = prefix + "s2_head";
      br.s2_head = make_conv(hname, refine, ch_out, 5, 1, 2, rng, lr_for(hname, 1.0));
    }
    if (s3) {
      int cat = 0;
      for (Modality mod : cfg.input_modalities) {
        const std::string name = prefix + "s3_entry_" + modality_name(mod);
        br.s3_entry.push_back(make_conv(name, modality_channels(mod),
                                        entry_filters, 9, 2, 4, rng,
                                        lr_for(name, 1.0)));
        cat += entry_filters;
      }
      cat += ch_out;  // the upsampled mid prediction rides along
      int in_c = cat;
      for (int i = 0; i < 2; ++i) {
        const std::string name = prefix + "s3_mid" + std::to_string(i + 1);
        br.s3_mid.push_back(
            make_conv(name, in_c, refine, 5, 1, 2, rng, lr_for(name, 10.0)));
        in_c = refine;
      }
      const std::string hname = prefix + "s3_head";
      br.s3_head = make_conv(hname, refine, ch_out, 5, 1, 2, rng, lr_for(hname, 1.0));
    }
    m.branches.push_back(std::move(br));
  }

  if (!unused_overrides.empty())
    throw ConfigError("learning-rate override for unknown layer: " +
                      *unused_overrides.begin());
  return m;
}

std::vector<Tensor*> forward_train(Tape& tape, Model& m, const BatchInputs& in,
                                   bool training, Rng* rng, int through_scale) {
  if (through_scale != 0 && through_scale != 2 && through_scale != 3)
    throw ConfigError("through_scale must be 0 (all), 2 or 3");
  if (through_scale == 3 && !m.has_scale(3))
    throw ConfigError("this setup has no fine scale");
  const bool stop_at_2 = through_scale == 2 || !m.has_scale(3);
  const bool scale1_only = m.has_scale(1) && !m.has_scale(2);

  Staged st = run_shared(tape, m, in, training, rng);
  std::vector<Tensor*> outs;
  for (auto& br : m.branches) {
    Tensor* o;
    if (scale1_only) {
      o = branch_scale1_head(tape, m, br, st);
    } else {
      o = branch_scale2(tape, m, br, st);
      if (!stop_at_2) {
        Tensor* p2 = to_training_form(tape, m.config, br, o);
        o = branch_scale3(tape, m, br, st, p2);
      }
    }
    outs.push_back(to_training_form(tape, m.config, br, o));
  }
  return outs;
}

Tensor* forward_full(Tape& tape, Model& m, const BatchInputs& in, bool training,
                     Rng* rng) {
  std::vector<Tensor*> outs = forward_train(tape, m, in, training, rng, 0);
  std::vector<Tensor*> evals;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    Tensor* o = outs[i];
    if (branch_task(m.config, m.branches[i]) == Task::semantic)
      o = softmax_channels(tape, o);
    evals.push_back(o);
  }
  return evals.size() == 1 ? evals[0] : concat_channels(tape, evals);
}

std::pair<Tensor*, Tensor*> shared_trunk_forward(Tape& tape, Model& m,
                                                 const BatchInputs& in,
                                                 bool training, Rng* rng) {
  if (m.config.task != Task::depth_normals)
    throw ConfigError("shared-trunk forward applies to the combined task only");
  std::vector<Tensor*> outs = forward_train(tape, m, in, training, rng, 0);
  return {outs[0], outs[1]};
}

std::vector<Tensor> scale2_predictions(Model& m, const BatchInputs& in) {
  if (!m.has_scale(3))
    throw ConfigError("mid-scale predictions feed a fine scale this setup lacks");
  Tape tape(false);
  std::vector<Tensor*> outs = forward_train(tape, m, in, false, nullptr, 2);
  std::vector<Tensor> res;
  for (Tensor* o : outs) {
    Tensor* up = upsample_bilinear(tape, o, 2);
    Tensor* c = crop_spatial(tape, up, 0, 0, m.plan.s3.h, m.plan.s3.w);
    res.push_back(*c);
  }
  return res;
}

std::vector<Tensor*> forward_scale3_crop(Tape& tape, Model& m,
                                         const BatchInputs& in,
                                         const std::vector<Tensor>& s2_pred_fine,
                                         int oy, int ox, int crop_h, int crop_w) {
  const ArchPlan& p = m.plan;
  const ModelConfig& cfg = m.config;
  if (!m.has_scale(3)) throw ConfigError("this setup has no fine scale");
  const int n = check_inputs(m, in);
  if (crop_h < 1 || crop_w < 1 || oy < 0 || ox < 0 || oy + crop_h > p.s3.h ||
      ox + crop_w > p.s3.w)
    throw InputError("crop window leaves the fine grid");
  if (s2_pred_fine.size() != m.branches.size())
    throw InputError("one mid prediction per branch is required");
  for (std::size_t i = 0; i < m.branches.size(); ++i) {
    const Tensor& t = s2_pred_fine[i];
    if (t.rank() != 4 || t.n() != n || t.c() != m.branches[i].channels_out ||
        t.h() != p.s3.h || t.w() != p.s3.w)
      throw InputError("mid prediction must be (n, C, fine_h, fine_w); got " +
                       t.shape_str());
  }

  // The 9x9 stride-2 entry conv, run unpadded over this window, reads the
  // same pixels as the padded full pass: fine row i maps to entry output row
  // i + crop offset, which reads trimmed rows 2(i + off) - 4 .. + 4. Zeros
  // fill anything outside the picture, exactly like the full pass padding.
  const int wsy = 2 * (oy + p.s3_crop_y) - 4;
  const int wsx = 2 * (ox + p.s3_crop_x) - 4;
  const int lh = 2 * crop_h + 7;
  const int lw = 2 * crop_w + 7;

  std::vector<Tensor*> windows;
  for (Modality mod : cfg.input_modalities) {
    const Tensor& src = modality_tensor(in, mod);
    const int ch = modality_channels(mod);
    Tensor win({n, ch, lh, lw});
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < ch; ++c)
        for (int r = 0; r < lh; ++r) {
          const int ty = wsy + r;
          if (ty < 0 || ty >= p.trimmed.h) continue;
          for (int col = 0; col < lw; ++col) {
            const int tx = wsx + col;
            if (tx < 0 || tx >= p.trimmed.w) continue;
            win.at(b, c, r, col) = src.at(b, c, p.trim_y + ty, p.trim_x + tx);
          }
        }
    windows.push_back(tape.track(std::move(win)));
  }

  std::vector<Tensor*> outs;
  for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
    RefineBranch& br = m.branches[bi];
    Tensor* pred = tape.track(s2_pred_fine[bi]);
    Tensor* pwin = crop_spatial(tape, pred, oy, ox, crop_h, crop_w);
    std::vector<Tensor*> cat;
    for (std::size_t i = 0; i < br.s3_entry.size(); ++i) {
      // output size is exactly (crop_h, crop_w); no further crop needed
      cat.push_back(relu(tape, conv2d_pad(tape, windows[i], br.s3_entry[i], 0)));
    }
    cat.push_back(pwin);
    Tensor* x = concat_channels(tape, cat);
    for (auto& mid : br.s3_mid) x = relu(tape, conv2d(tape, x, mid));
    outs.push_back(to_training_form(tape, cfg, br, conv2d(tape, x, br.s3_head)));
  }
  return outs;
}

}  // namespace pixelmap
