#include "pixelmap/config.hpp"

#include <cctype>
#include <cerrno>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw InputError("config key " + key + ": '" + value + "' is not " + want);
}

long long parse_ll(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0' || value.empty())
    bad_value(key, value, "an integer");
  return v;
}

double parse_d(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0' || value.empty())
    bad_value(key, value, "a number");
  return v;
}

// 17 significant digits reproduce any double exactly through text.
std::string fmt_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

Config Config::from_text(const std::string& text) {
  Config c;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string raw = text.substr(pos, eol - pos);
    const std::string line = trim(raw);
    if (!line.empty() && line[0] != '#') {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw FormatError("config line has no '='", pos);
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw FormatError("config line has an empty key", pos);
      c.kv_[key] = trim(line.substr(eq + 1));
    }
    pos = eol + 1;
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[trim(key)] = trim(value);
}

void Config::set_line(const std::string& line) {
  const std::size_t eq = line.find('=');
  if (eq == std::string::npos)
    throw InputError("override '" + line + "' is not of the form key=value");
  const std::string key = trim(line.substr(0, eq));
  if (key.empty())
    throw InputError("override '" + line + "' has an empty key");
  kv_[key] = trim(line.substr(eq + 1));
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string Config::get_str(const std::string& key,
                            const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int Config::get_int(const std::string& key, int def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const long long v = parse_ll(key, it->second);
  if (v < INT_MIN || v > INT_MAX) bad_value(key, it->second, "a 32-bit integer");
  return static_cast<int>(v);
}

long Config::get_long(const std::string& key, long def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  return static_cast<long>(parse_ll(key, it->second));
}

double Config::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  return parse_d(key, it->second);
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean (true/false/1/0)");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v.empty() || v[0] == '-') bad_value(key, v, "an unsigned integer");
  errno = 0;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    bad_value(key, v, "an unsigned integer");
  return parsed;
}

std::vector<std::string> Config::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = kv_.lower_bound(prefix);
       it != kv_.end() && it->first.rfind(prefix, 0) == 0; ++it)
    out.push_back(it->first);
  return out;
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

std::string task_name(Task t) {
  switch (t) {
    case Task::depth: return "depth";
    case Task::normals: return "normals";
    case Task::semantic: return "semantic";
    case Task::depth_normals: return "depth_normals";
  }
  throw ConfigError("unknown task enum value");
}

Task task_from_name(const std::string& name) {
  if (name == "depth") return Task::depth;
  if (name == "normals") return Task::normals;
  if (name == "semantic") return Task::semantic;
  if (name == "depth_normals") return Task::depth_normals;
  throw ConfigError("unknown task: '" + name +
                    "' (expected depth, normals, semantic, depth_normals)");
}

std::string modality_label(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::depth: return "depth";
    case Modality::normals: return "normals";
  }
  throw ConfigError("unknown modality enum value");
}

Modality modality_from_name(const std::string& name) {
  if (name == "rgb") return Modality::rgb;
  if (name == "depth") return Modality::depth;
  if (name == "normals") return Modality::normals;
  throw ConfigError("unknown modality: '" + name +
                    "' (expected rgb, depth, normals)");
}

// ---------------------------------------------------------------------------
// Model config
// ---------------------------------------------------------------------------

namespace {

std::string stack_name(const std::vector<CoarseBlock>& stack) {
  if (stack == alexnet_stack()) return "alexnet";
  if (stack == vgg_stack()) return "vgg";
  if (stack == tiny_stack()) return "tiny";
  throw ConfigError("coarse stack does not match a named preset "
                    "(alexnet, vgg, tiny); custom stacks do not serialize");
}

std::vector<CoarseBlock> stack_from_name(const std::string& name) {
  if (name == "alexnet") return alexnet_stack();
  if (name == "vgg") return vgg_stack();
  if (name == "tiny") return tiny_stack();
  throw ConfigError("unknown coarse stack: '" + name +
                    "' (expected alexnet, vgg, tiny)");
}

}  // namespace

ModelConfig model_config_from(const Config& c) {
  ModelConfig m;
  if (c.has("model.task")) m.task = task_from_name(c.get_str("model.task", ""));
  m.num_classes = c.get_int("model.num_classes", m.num_classes);
  apply_task_presets(m);  // fills the task-dependent knobs before explicit keys

  m.input_h = c.get_int("model.input_h", m.input_h);
  m.input_w = c.get_int("model.input_w", m.input_w);
  if (c.has("model.scales")) {
    m.scales.clear();
    for (const std::string& s : split_list(c.get_str("model.scales", "")))
      m.scales.push_back(static_cast<int>(parse_ll("model.scales", s)));
  }
  m.width_multiplier = c.get_double("model.width_multiplier", m.width_multiplier);
  if (c.has("model.stack"))
    m.coarse_stack = stack_from_name(c.get_str("model.stack", ""));
  if (c.has("model.modalities")) {
    m.input_modalities.clear();
    for (const std::string& s : split_list(c.get_str("model.modalities", "")))
      m.input_modalities.push_back(modality_from_name(s));
  }
  m.dropout_rate = c.get_double("model.dropout_rate", m.dropout_rate);
  m.fc6_lr = c.get_double("model.fc6_lr", m.fc6_lr);
  m.fc7_lr = c.get_double("model.fc7_lr", m.fc7_lr);
  m.fc6_units = c.get_int("model.fc6_units", m.fc6_units);
  m.coarse_feature_channels =
      c.get_int("model.coarse_feature_channels", m.coarse_feature_channels);
  m.refine_channels = c.get_int("model.refine_channels", m.refine_channels);
  m.entry_filters_single =
      c.get_int("model.entry_filters_single", m.entry_filters_single);
  m.entry_filters_multi =
      c.get_int("model.entry_filters_multi", m.entry_filters_multi);
  const std::string prefix = "model.lr_override.";
  for (const std::string& key : c.keys_with_prefix(prefix))
    m.lr_overrides[key.substr(prefix.size())] = c.get_double(key, 0.0);
  return m;
}

void write_model_config(Config& c, const ModelConfig& m) {
  c.set("model.input_h", std::to_string(m.input_h));
  c.set("model.input_w", std::to_string(m.input_w));
  c.set("model.task", task_name(m.task));
  c.set("model.num_classes", std::to_string(m.num_classes));
  std::vector<std::string> scales;
  for (int s : m.scales) scales.push_back(std::to_string(s));
  c.set("model.scales", join_list(scales));
  c.set("model.width_multiplier", fmt_double(m.width_multiplier));
  c.set("model.stack", stack_name(m.coarse_stack));
  std::vector<std::string> mods;
  for (Modality mod : m.input_modalities) mods.push_back(modality_label(mod));
  c.set("model.modalities", join_list(mods));
  c.set("model.dropout_rate", fmt_double(m.dropout_rate));
  c.set("model.fc6_lr", fmt_double(m.fc6_lr));
  c.set("model.fc7_lr", fmt_double(m.fc7_lr));
  c.set("model.fc6_units", std::to_string(m.fc6_units));
  c.set("model.coarse_feature_channels",
        std::to_string(m.coarse_feature_channels));
  c.set("model.refine_channels", std::to_string(m.refine_channels));
  c.set("model.entry_filters_single", std::to_string(m.entry_filters_single));
  c.set("model.entry_filters_multi", std::to_string(m.entry_filters_multi));
  for (const auto& [layer, rate] : m.lr_overrides)
    c.set("model.lr_override." + layer, fmt_double(rate));
}

// ---------------------------------------------------------------------------
// Train config
// ---------------------------------------------------------------------------

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.batch_size = c.get_int("train.batch_size", t.batch_size);
  t.base_lr = c.get_double("train.base_lr", t.base_lr);
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.lr_step_at = c.get_long("train.lr_step_at", t.lr_step_at);
  t.lr_step_factor = c.get_double("train.lr_step_factor", t.lr_step_factor);
  t.phase1_steps = c.get_long("train.phase1_steps", t.phase1_steps);
  t.phase2_steps = c.get_long("train.phase2_steps", t.phase2_steps);
  t.seed = c.get_u64("train.seed", t.seed);
  t.augment = c.get_bool("train.augment", t.augment);
  t.crop_h = c.get_int("train.crop_h", t.crop_h);
  t.crop_w = c.get_int("train.crop_w", t.crop_w);
  t.workers = c.get_int("train.workers", t.workers);
  t.reweight_classes = c.get_bool("train.reweight_classes", t.reweight_classes);
  t.normals_lr_boost = c.get_double("train.normals_lr_boost", t.normals_lr_boost);
  AugmentConfig& a = t.augment_config;
  a.scale_min = c.get_double("augment.scale_min", a.scale_min);
  a.scale_max = c.get_double("augment.scale_max", a.scale_max);
  a.rot_max_deg = c.get_double("augment.rot_max_deg", a.rot_max_deg);
  a.trans_frac = c.get_double("augment.trans_frac", a.trans_frac);
  a.gain_min = c.get_double("augment.gain_min", a.gain_min);
  a.gain_max = c.get_double("augment.gain_max", a.gain_max);
  a.contrast_min = c.get_double("augment.contrast_min", a.contrast_min);
  a.contrast_max = c.get_double("augment.contrast_max", a.contrast_max);
  a.flip_prob = c.get_double("augment.flip_prob", a.flip_prob);
  return t;
}

void write_train_config(Config& c, const TrainConfig& t) {
  c.set("train.batch_size", std::to_string(t.batch_size));
  c.set("train.base_lr", fmt_double(t.base_lr));
  c.set("train.momentum", fmt_double(t.momentum));
  c.set("train.lr_step_at", std::to_string(t.lr_step_at));
  c.set("train.lr_step_factor", fmt_double(t.lr_step_factor));
  c.set("train.phase1_steps", std::to_string(t.phase1_steps));
  c.set("train.phase2_steps", std::to_string(t.phase2_steps));
  c.set("train.seed", std::to_string(t.seed));
  c.set("train.augment", t.augment ? "true" : "false");
  c.set("train.crop_h", std::to_string(t.crop_h));
  c.set("train.crop_w", std::to_string(t.crop_w));
  c.set("train.workers", std::to_string(t.workers));
  c.set("train.reweight_classes", t.reweight_classes ? "true" : "false");
  c.set("train.normals_lr_boost", fmt_double(t.normals_lr_boost));
  const AugmentConfig& a = t.augment_config;
  c.set("augment.scale_min", fmt_double(a.scale_min));
  c.set("augment.scale_max", fmt_double(a.scale_max));
  c.set("augment.rot_max_deg", fmt_double(a.rot_max_deg));
  c.set("augment.trans_frac", fmt_double(a.trans_frac));
  c.set("augment.gain_min", fmt_double(a.gain_min));
  c.set("augment.gain_max", fmt_double(a.gain_max));
  c.set("augment.contrast_min", fmt_double(a.contrast_min));
  c.set("augment.contrast_max", fmt_double(a.contrast_max));
  c.set("augment.flip_prob", fmt_double(a.flip_prob));
}

// ---------------------------------------------------------------------------
// Scene spec
// ---------------------------------------------------------------------------

SceneSpec scene_spec_from(const Config& c) {
  SceneSpec s;
  s.width = c.get_int("scene.width", s.width);
  s.height = c.get_int("scene.height", s.height);
  s.boxes_min = c.get_int("scene.boxes_min", s.boxes_min);
  s.boxes_max = c.get_int("scene.boxes_max", s.boxes_max);
  s.box_size_min = c.get_double("scene.box_size_min", s.box_size_min);
  s.box_size_max = c.get_double("scene.box_size_max", s.box_size_max);
  s.box_x_range = c.get_double("scene.box_x_range", s.box_x_range);
  s.box_z_min = c.get_double("scene.box_z_min", s.box_z_min);
  s.box_z_max = c.get_double("scene.box_z_max", s.box_z_max);
  s.ground_y = c.get_double("scene.ground_y", s.ground_y);
  s.max_depth = c.get_double("scene.max_depth", s.max_depth);
  s.num_classes = c.get_int("scene.num_classes", s.num_classes);
  s.light[0] = c.get_double("scene.light_x", s.light[0]);
  s.light[1] = c.get_double("scene.light_y", s.light[1]);
  s.light[2] = c.get_double("scene.light_z", s.light[2]);
  return s;
}

void write_scene_spec(Config& c, const SceneSpec& s) {
  c.set("scene.width", std::to_string(s.width));
  c.set("scene.height", std::to_string(s.height));
  c.set("scene.boxes_min", std::to_string(s.boxes_min));
  c.set("scene.boxes_max", std::to_string(s.boxes_max));
  c.set("scene.box_size_min", fmt_double(s.box_size_min));
  c.set("scene.box_size_max", fmt_double(s.box_size_max));
  c.set("scene.box_x_range", fmt_double(s.box_x_range));
  c.set("scene.box_z_min", fmt_double(s.box_z_min));
  c.set("scene.box_z_max", fmt_double(s.box_z_max));
  c.set("scene.ground_y", fmt_double(s.ground_y));
  c.set("scene.max_depth", fmt_double(s.max_depth));
  c.set("scene.num_classes", std::to_string(s.num_classes));
  c.set("scene.light_x", fmt_double(s.light[0]));
  c.set("scene.light_y", fmt_double(s.light[1]));
  c.set("scene.light_z", fmt_double(s.light[2]));
}

}  // namespace pixelmap
