// Command-line front end. Subcommands: gen-data, train, eval, predict,
// ablate, gradcheck. Exit codes: 0 success, 1 verification/training failure,
// 2 usage or configuration error, 3 I/O or format error. Every command that
// takes --seed is bit-reproducible, and each run echoes its fully resolved
// configuration into the output directory so it can be replayed from there.
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "pixelmap/config.hpp"
#include "pixelmap/data_io.hpp"
#include "pixelmap/errors.hpp"
#include "pixelmap/gradcheck_suite.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/trainer.hpp"

using namespace pixelmap;

namespace {

// Flags collect into a key=value overlay; the file config (if any) loads
// first and explicit flags win. Unset flags leave no key, so file values
// and compiled defaults keep their precedence.
struct Overlay {
  Config c;
  void kv(const std::string& key, const std::string& value) { c.set(key, value); }
  template <typename T>
  void num(const std::string& key, T value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    c.set(key, os.str());
  }
};

Config merged_config(const std::string& config_path, const Overlay& overlay) {
  Config c;
  if (!config_path.empty()) c = Config::from_file(config_path);
  for (const std::string& key : overlay.c.keys_with_prefix(""))
    c.set(key, overlay.c.get_str(key, ""));
  return c;
}

void parse_size(const std::string& wxh, int& w, int& h) {
  const auto x = wxh.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == wxh.size())
    throw ConfigError("size must look like 64x48, got '" + wxh + "'");
  try {
    w = std::stoi(wxh.substr(0, x));
    h = std::stoi(wxh.substr(x + 1));
  } catch (const std::exception&) {
    throw ConfigError("size must look like 64x48, got '" + wxh + "'");
  }
  if (w < 1 || h < 1) throw ConfigError("size must be positive, got '" + wxh + "'");
}

// Common run.* echo keys so any output directory names its own inputs.
void stamp_run(Config& c, const std::string& command, const std::string& data,
               const std::string& out) {
  c.set("run.command", command);
  if (!data.empty()) c.set("run.data", data);
  c.set("run.out", out);
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config, out, size;
  int count = 0, test_count = 0;
  std::uint64_t seed = 1;
  Overlay overlay;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.count < 1) throw ConfigError("--count must be at least 1");
  if (a.test_count < 0) throw ConfigError("--test-count must be >= 0");
  Config c = merged_config(a.config, a.overlay);
  if (!a.size.empty()) {
    int w = 0, h = 0;
    parse_size(a.size, w, h);
    c.set("scene.width", std::to_string(w));
    c.set("scene.height", std::to_string(h));
  }
  const SceneSpec spec = scene_spec_from(c);
  const std::string out = cli::resolve_out_dir(a.out, "gen-data");

  generate_dataset(out, "train", spec, a.count, a.seed, 0);
  if (a.test_count > 0)
    generate_dataset(out, "test", spec, a.test_count, a.seed,
                     static_cast<std::uint64_t>(a.count));

  Config echo;
  write_scene_spec(echo, spec);
  stamp_run(echo, "gen-data", "", out);
  echo.set("run.count", std::to_string(a.count));
  echo.set("run.test_count", std::to_string(a.test_count));
  echo.set("run.seed", std::to_string(a.seed));
  cli::echo_config(out, echo);

  std::cout << "wrote " << a.count << " train";
  if (a.test_count > 0) std::cout << " and " << a.test_count << " test";
  std::cout << " samples (" << spec.width << "x" << spec.height << ", "
            << spec.num_classes << " classes) to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  long save_every = 0;
  Overlay overlay;
};

// Dataset geometry and class count fill whatever the config left unset, so
// the common case needs no size flags at all.
void default_from_meta(Config& c, const DatasetMeta& meta) {
  if (!c.has("model.input_h")) c.set("model.input_h", std::to_string(meta.height));
  if (!c.has("model.input_w")) c.set("model.input_w", std::to_string(meta.width));
  if (!c.has("model.num_classes"))
    c.set("model.num_classes", std::to_string(meta.num_classes));
}

int cmd_train(const TrainArgs& a) {
  if (a.data.empty()) throw ConfigError("--data is required");
  const Dataset ds = load_dataset(a.data, "train");

  Config c = merged_config(a.config, a.overlay);
  default_from_meta(c, ds.meta);
  const ModelConfig mc = model_config_from(c);
  const TrainConfig tc = train_config_from(c);
  const std::string out = cli::resolve_out_dir(a.out, "train");

  Config echo;
  write_model_config(echo, mc);
  write_train_config(echo, tc);
  stamp_run(echo, "train", a.data, out);
  echo.set("run.save_every", std::to_string(a.save_every));
  cli::echo_config(out, echo);

  Rng init = Rng::fork(tc.seed, 1);
  Model m = build_model(mc, init);
  TrainState state = make_state(tc);
  const std::string ckpt = out + "/checkpoint.pmck";

  auto cadence = [&](long step) {
    if (a.save_every > 0 && step % a.save_every == 0)
      save_checkpoint(ckpt, m, state);
  };

  std::vector<LossPoint> curve;
  if (tc.phase1_steps > 0) {
    std::cout << "phase 1: " << tc.phase1_steps << " steps on the mid grid\n";
    curve = train_phase1(m, ds.samples, tc, state, cadence);
    std::cout << "  final loss " << curve.back().loss << "\n";
  }
  if (m.has_scale(3) && tc.phase2_steps > 0) {
    std::cout << "phase 2: " << tc.phase2_steps << " steps on fine windows\n";
    auto fine = train_phase2(m, ds.samples, tc, state, cadence);
    std::cout << "  final loss " << fine.back().loss << "\n";
    curve.insert(curve.end(), fine.begin(), fine.end());
  }

  save_checkpoint(ckpt, m, state);
  cli::write_text_file(out + "/loss.csv", cli::curve_csv(curve));
  std::cout << "trained " << state.step << " steps; wrote " << ckpt << " and "
            << out << "/loss.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, split = "test", out, task;
  int classes = 0;
  bool dump = false, gt_echo = false;
};

int cmd_eval(const EvalArgs& a) {
  if (a.data.empty()) throw ConfigError("--data is required");
  const Dataset ds = load_dataset(a.data, a.split);
  const std::string out = cli::resolve_out_dir(a.out, "eval");

  MetricReport report;
  Config echo;
  if (a.gt_echo) {
    if (a.task.empty())
      throw ConfigError("--ground-truth-echo needs --task");
    const Task task = task_from_name(a.task);
    const int classes = a.classes > 0 ? a.classes : ds.meta.num_classes;
    report = evaluate_ground_truth_echo(ds.samples, task, classes);
    echo.set("run.ground_truth_echo", "true");
    echo.set("model.task", a.task);
  } else {
    if (a.checkpoint.empty())
      throw ConfigError("--checkpoint is required (or --ground-truth-echo)");
    LoadedTraining lt = load_checkpoint(a.checkpoint);
    report = evaluate(lt.model, ds.samples);
    write_model_config(echo, lt.model.config);
    echo.set("run.checkpoint", a.checkpoint);
    if (a.dump) {
      const std::string pred_dir = out + "/predictions";
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Tensor pred = predict_full_res(lt.model, ds.samples[i]);
        cli::dump_prediction(pred_dir, static_cast<int>(i),
                             lt.model.config.task, pred,
                             lt.model.config.num_classes);
      }
      std::cout << "wrote predictions for " << ds.samples.size()
                << " samples to " << pred_dir << "\n";
    }
  }

  const std::string text = cli::format_report(report);
  std::cout << text;
  cli::write_text_file(out + "/metrics.txt", text);
  stamp_run(echo, "eval", a.data, out);
  echo.set("run.split", a.split);
  cli::echo_config(out, echo);
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, data, split = "test", out;
  int index = -1;
};

int cmd_predict(const PredictArgs& a) {
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (a.data.empty()) throw ConfigError("--data is required");
  const Dataset ds = load_dataset(a.data, a.split);
  LoadedTraining lt = load_checkpoint(a.checkpoint);
  const std::string out = cli::resolve_out_dir(a.out, "predict");

  std::vector<int> picks;
  if (a.index >= 0) {
    if (a.index >= static_cast<int>(ds.samples.size()))
      throw InputError("--index " + std::to_string(a.index) +
                       " is out of range; the split holds " +
                       std::to_string(ds.samples.size()) + " samples");
    picks.push_back(a.index);
  } else {
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      picks.push_back(static_cast<int>(i));
  }
  for (int i : picks) {
    const Tensor pred = predict_full_res(lt.model, ds.samples[i]);
    cli::dump_prediction(out, i, lt.model.config.task, pred,
                         lt.model.config.num_classes);
  }

  Config echo;
  write_model_config(echo, lt.model.config);
  stamp_run(echo, "predict", a.data, out);
  echo.set("run.checkpoint", a.checkpoint);
  echo.set("run.split", a.split);
  cli::echo_config(out, echo);
  std::cout << "wrote " << picks.size() << " predictions to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string config, data, out, donor, eval_split = "train";
  std::string scale_sets = "1|2|1,2|1,2,3";
  std::string conditions;  // any of a,b,c
  Overlay overlay;
};

struct AblationRow {
  std::string label;
  double final_loss = 0.0;
  MetricReport report;
};

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

AblationRow run_condition(const std::string& label, const Config& base,
                          const std::vector<Sample>& samples,
                          const std::string& eval_split_note) {
  (void)eval_split_note;
  const ModelConfig mc = model_config_from(base);
  const TrainConfig tc = train_config_from(base);
  Rng init = Rng::fork(tc.seed, 1);
  Model m = build_model(mc, init);
  TrainState state = make_state(tc);

  AblationRow row;
  row.label = label;
  if (tc.phase1_steps > 0) {
    auto curve = train_phase1(m, samples, tc, state);
    row.final_loss = curve.back().loss;
  }
  if (m.has_scale(3) && tc.phase2_steps > 0) {
    auto curve = train_phase2(m, samples, tc, state);
    row.final_loss = curve.back().loss;
  }
  row.report = evaluate(m, samples);
  return row;
}

std::string ablation_table(Task task, const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "condition" << std::right
     << std::setw(12) << "train_loss";
  switch (task) {
    case Task::depth:
      os << std::setw(10) << "abs_rel" << std::setw(10) << "rms_lin"
         << std::setw(10) << "delta1" << std::setw(11) << "scale_inv";
      break;
    case Task::normals:
      os << std::setw(10) << "mean_deg" << std::setw(11) << "median_deg"
         << std::setw(10) << "within11";
      break;
    case Task::semantic:
      os << std::setw(10) << "pix_acc" << std::setw(10) << "cls_acc"
         << std::setw(10) << "jaccard";
      break;
    case Task::depth_normals:
      os << std::setw(10) << "abs_rel" << std::setw(10) << "mean_deg";
      break;
  }
  os << "\n";
  for (const AblationRow& r : rows) {
    os << std::left << std::setw(26) << r.label << std::right << std::fixed
       << std::setprecision(4) << std::setw(12) << r.final_loss;
    switch (task) {
      case Task::depth:
        os << std::setw(10) << r.report.depth.abs_rel << std::setw(10)
           << r.report.depth.rms_lin << std::setw(10) << r.report.depth.delta1
           << std::setw(11) << r.report.depth.scale_inv;
        break;
      case Task::normals:
        os << std::setw(10) << r.report.normals.mean_deg << std::setw(11)
           << r.report.normals.median_deg << std::setw(10)
           << r.report.normals.within_11;
        break;
      case Task::semantic:
        os << std::setw(10) << r.report.seg.pixel_acc << std::setw(10)
           << r.report.seg.mean_class_acc << std::setw(10)
           << r.report.seg.mean_jaccard;
        break;
      case Task::depth_normals:
        os << std::setw(10) << r.report.depth.abs_rel << std::setw(10)
           << r.report.normals.mean_deg;
        break;
    }
    os << std::defaultfloat << "\n";
  }
  return os.str();
}

int cmd_ablate(const AblateArgs& a) {
  if (a.data.empty()) throw ConfigError("--data is required");
  const Dataset train_ds = load_dataset(a.data, "train");
  const Dataset eval_ds = a.eval_split == "train"
                              ? train_ds
                              : load_dataset(a.data, a.eval_split);
  const std::string out = cli::resolve_out_dir(a.out, "ablate");

  Config base = merged_config(a.config, a.overlay);
  default_from_meta(base, train_ds.meta);
  const Task task = model_config_from(base).task;

  std::vector<AblationRow> rows;

  for (const std::string& set : split_on(a.scale_sets, '|')) {
    Config c = base;
    c.set("model.scales", set);
    c.set("model.modalities", "rgb");
    rows.push_back(run_condition("scales={" + set + "}", c, train_ds.samples,
                                 a.eval_split));
    std::cout << "finished scales={" << set << "}\n";
  }

  for (const std::string& cond : split_on(a.conditions, ',')) {
    Config c = base;
    if (cond == "a") {
      c.set("model.modalities", "rgb");
      rows.push_back(run_condition("input=a(rgb)", c, train_ds.samples,
                                   a.eval_split));
    } else if (cond == "b") {
      if (a.donor.empty())
        throw ConfigError(
            "input condition b needs --donor <checkpoint> for the predicted "
            "depth/normals channels");
      LoadedTraining donor = load_checkpoint(a.donor);
      if (donor.model.config.task != Task::depth_normals)
        throw ConfigError(
            "the donor checkpoint must hold the combined depth+normals task");
      std::vector<Sample> predicted = train_ds.samples;
      for (Sample& s : predicted) {
        const Tensor p = predict_full_res(donor.model, s);
        s.depth = cli::slice_channels(p, 0, 1);
        s.normals = cli::slice_channels(p, 1, 3);
      }
      c.set("model.modalities", "rgb,depth,normals");
      rows.push_back(run_condition("input=b(rgb+predicted)", c, predicted,
                                   a.eval_split));
    } else if (cond == "c") {
      c.set("model.modalities", "rgb,depth,normals");
      rows.push_back(run_condition("input=c(rgb+true)", c, train_ds.samples,
                                   a.eval_split));
    } else {
      throw ConfigError("unknown input condition '" + cond +
                        "' (expected a, b, or c)");
    }
    std::cout << "finished input condition " << cond << "\n";
  }

  const std::string table = ablation_table(task, rows);
  std::cout << table;
  cli::write_text_file(out + "/ablation.txt", table);

  Config echo = base;
  stamp_run(echo, "ablate", a.data, out);
  echo.set("run.scale_sets", a.scale_sets);
  if (!a.conditions.empty()) echo.set("run.conditions", a.conditions);
  if (!a.donor.empty()) echo.set("run.donor", a.donor);
  echo.set("run.eval_split", a.eval_split);
  cli::echo_config(out, echo);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  SuiteOptions opts;
  opts.seed = a.seed;
  opts.inject_fault = a.inject_fault;
  const auto reports = gradcheck_suite(opts);

  std::size_t failed = 0;
  for (const auto& r : reports) {
    std::ostringstream line;
    line << (r.passed ? "PASS" : "FAIL") << "  " << std::left << std::setw(44)
         << r.label << " max_rel_err " << std::scientific
         << std::setprecision(3) << r.max_rel_err << "  tol " << r.tol;
    if (!r.error.empty()) line << "  [" << r.error << "]";
    std::cout << line.str() << "\n";
    if (!r.passed) ++failed;
  }
  std::cout << reports.size() - failed << "/" << reports.size()
            << " gradient checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"three-scale pixel-map regression: data generation, training, "
               "evaluation, ablation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  TrainArgs train;
  EvalArgs eval;
  PredictArgs predict;
  AblateArgs ablate;
  GradcheckArgs gradcheck;

  // ---- gen-data ----
  CLI::App* sub_gen = app.add_subcommand("gen-data", "render a synthetic box-scene dataset");
  sub_gen->add_option("--config", gen.config, "key=value config file");
  sub_gen->add_option("--out", gen.out, "dataset root (default $PIXELMAP_OUT/gen-data)");
  sub_gen->add_option("--count", gen.count, "training samples")->required();
  sub_gen->add_option("--test-count", gen.test_count, "held-out samples (disjoint seed range)");
  sub_gen->add_option("--size", gen.size, "image size as WxH, e.g. 64x48");
  sub_gen->add_option("--seed", gen.seed, "generator seed");
  sub_gen->add_option_function<int>("--classes", [&](int v) { gen.overlay.num("scene.num_classes", v); }, "class count (ground + box classes)");
  sub_gen->add_option_function<std::string>("--set", [&](const std::string& v) { gen.overlay.c.set_line(v); }, "raw key=value override (repeatable)")->take_all();

  // ---- shared model/training flags ----
  auto add_model_flags = [](CLI::App* s, Overlay& o) {
    s->add_option_function<std::string>("--task", [&o](const std::string& v) { o.kv("model.task", v); }, "depth | normals | semantic | depth_normals");
    s->add_option_function<int>("--classes", [&o](int v) { o.num("model.num_classes", v); }, "semantic class count");
    s->add_option_function<std::string>("--scales", [&o](const std::string& v) { o.kv("model.scales", v); }, "active scales, e.g. 1,2,3");
    s->add_option_function<std::string>("--modalities", [&o](const std::string& v) { o.kv("model.modalities", v); }, "input channels: rgb[,depth][,normals]");
    s->add_option_function<std::string>("--stack", [&o](const std::string& v) { o.kv("model.stack", v); }, "full-view stack: alexnet | vgg | tiny");
    s->add_option_function<double>("--width-mult", [&o](double v) { o.num("model.width_multiplier", v); }, "channel width multiplier");
    s->add_option_function<std::string>("--input-size", [&o](const std::string& v) {
      int w = 0, h = 0;
      parse_size(v, w, h);
      o.num("model.input_w", w);
      o.num("model.input_h", h);
    }, "input size as WxH (default: dataset size)");
  };
  auto add_train_flags = [](CLI::App* s, Overlay& o) {
    s->add_option_function<int>("--batch", [&o](int v) { o.num("train.batch_size", v); }, "minibatch size");
    s->add_option_function<double>("--lr", [&o](double v) { o.num("train.base_lr", v); }, "base learning rate");
    s->add_option_function<double>("--momentum", [&o](double v) { o.num("train.momentum", v); }, "momentum coefficient");
    s->add_option_function<long>("--lr-step-at", [&o](long v) { o.num("train.lr_step_at", v); }, "step where the rate drops");
    s->add_option_function<double>("--lr-step-factor", [&o](double v) { o.num("train.lr_step_factor", v); }, "rate multiplier at the drop");
    s->add_option_function<long>("--steps1", [&o](long v) { o.num("train.phase1_steps", v); }, "coarse+mid phase steps");
    s->add_option_function<long>("--steps2", [&o](long v) { o.num("train.phase2_steps", v); }, "fine phase steps");
    s->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o.num("train.seed", v); }, "training seed");
    s->add_option_function<int>("--workers", [&o](int v) { o.num("train.workers", v); }, "augmentation worker threads");
    s->add_flag_function("--augment", [&o](std::int64_t) { o.kv("train.augment", "true"); }, "enable augmentation");
    s->add_flag_function("--no-augment", [&o](std::int64_t) { o.kv("train.augment", "false"); }, "disable augmentation");
    s->add_option_function<std::string>("--reweight", [&o](const std::string& v) {
      if (v == "median-freq") o.kv("train.reweight_classes", "true");
      else if (v == "none") o.kv("train.reweight_classes", "false");
      else throw ConfigError("--reweight takes median-freq or none, got '" + v + "'");
    }, "semantic class reweighting: median-freq | none");
    s->add_option_function<std::string>("--crop", [&o](const std::string& v) {
      int w = 0, h = 0;
      parse_size(v, w, h);
      o.num("train.crop_w", w);
      o.num("train.crop_h", h);
    }, "fine-phase window as WxH (default: mid-grid size)");
    s->add_option_function<std::string>("--set", [&o](const std::string& v) { o.c.set_line(v); }, "raw key=value override (repeatable)")->take_all();
  };

  // ---- train ----
  CLI::App* sub_train = app.add_subcommand("train", "two-phase training run");
  sub_train->add_option("--config", train.config, "key=value config file");
  sub_train->add_option("--data", train.data, "dataset root")->required();
  sub_train->add_option("--out", train.out, "output directory (default $PIXELMAP_OUT/train)");
  sub_train->add_option("--save-every", train.save_every, "checkpoint cadence in steps (0 = final only)");
  add_model_flags(sub_train, train.overlay);
  add_train_flags(sub_train, train.overlay);

  // ---- eval ----
  CLI::App* sub_eval = app.add_subcommand("eval", "metric report for a checkpoint");
  sub_eval->add_option("--checkpoint", eval.checkpoint, "trained checkpoint (.pmck)");
  sub_eval->add_option("--data", eval.data, "dataset root")->required();
  sub_eval->add_option("--split", eval.split, "dataset split (default test)");
  sub_eval->add_option("--out", eval.out, "output directory");
  sub_eval->add_flag("--dump-predictions", eval.dump, "write per-sample prediction files");
  sub_eval->add_flag("--ground-truth-echo", eval.gt_echo, "score the ground truth against itself (needs --task)");
  sub_eval->add_option("--task", eval.task, "task for --ground-truth-echo");
  sub_eval->add_option("--classes", eval.classes, "class count for --ground-truth-echo (default: dataset)");

  // ---- predict ----
  CLI::App* sub_pred = app.add_subcommand("predict", "write predictions without scoring");
  sub_pred->add_option("--checkpoint", predict.checkpoint, "trained checkpoint (.pmck)")->required();
  sub_pred->add_option("--data", predict.data, "dataset root")->required();
  sub_pred->add_option("--split", predict.split, "dataset split (default test)");
  sub_pred->add_option("--index", predict.index, "single sample index (default: all)");
  sub_pred->add_option("--out", predict.out, "output directory");

  // ---- ablate ----
  CLI::App* sub_abl = app.add_subcommand("ablate", "scale-subset and input-modality comparison table");
  sub_abl->add_option("--config", ablate.config, "key=value config file");
  sub_abl->add_option("--data", ablate.data, "dataset root")->required();
  sub_abl->add_option("--out", ablate.out, "output directory");
  sub_abl->add_option("--scale-sets", ablate.scale_sets, "'|'-separated scale subsets (default 1|2|1,2|1,2,3)");
  sub_abl->add_option("--conditions", ablate.conditions, "input conditions to add: any of a,b,c");
  sub_abl->add_option("--donor", ablate.donor, "combined-task checkpoint predicting condition-b inputs");
  sub_abl->add_option("--eval-split", ablate.eval_split, "split scored per row (default train)");
  add_model_flags(sub_abl, ablate.overlay);
  add_train_flags(sub_abl, ablate.overlay);

  // ---- gradcheck ----
  CLI::App* sub_grad = app.add_subcommand("gradcheck", "finite-difference sweep over ops, losses, and tiny models");
  sub_grad->add_option("--seed", gradcheck.seed, "fixture seed");
  sub_grad->add_flag("--inject-fault", gradcheck.inject_fault, "add the sign-flip control (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(sub_gen)) return cmd_gen_data(gen);
    if (app.got_subcommand(sub_train)) return cmd_train(train);
    if (app.got_subcommand(sub_eval)) return cmd_eval(eval);
    if (app.got_subcommand(sub_pred)) return cmd_predict(predict);
    if (app.got_subcommand(sub_abl)) return cmd_ablate(ablate);
    if (app.got_subcommand(sub_grad)) return cmd_gradcheck(gradcheck);
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const TrainError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
