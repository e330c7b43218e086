#pragma once

#include <map>
#include <string>
#include <vector>

#include "pixelmap/data_io.hpp"
#include "pixelmap/model.hpp"
#include "pixelmap/trainer.hpp"

namespace pixelmap {

// ---------------------------------------------------------------------------
// Plain-text key=value configuration. One assignment per line; keys use dotted
// section prefixes ("model.task", "train.base_lr"). Full-line comments start
// with '#'; surrounding whitespace on keys and values is trimmed; the last
// assignment to a key wins. echo() renders the resolved state as sorted
// key=value lines that parse back to the same state.
// ---------------------------------------------------------------------------

class Config {
 public:
  Config() = default;

  static Config from_text(const std::string& text);  // FormatError at the bad line
  static Config from_file(const std::string& path);  // IoError if unreadable

  void set(const std::string& key, const std::string& value);
  // "key=value" in one string, as taken from a command line override.
  void set_line(const std::string& line);

  bool has(const std::string& key) const;

  // Typed getters return `def` when the key is absent and throw InputError
  // (naming the key) when the stored text does not parse exactly.
  std::string get_str(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  long get_long(const std::string& key, long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;  // true/false/1/0
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  std::string echo() const;

 private:
  std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------------------
// Typed views. Readers start from the struct's defaults, let the task preset
// fill the task-dependent knobs, then apply any explicit keys on top. Writers
// emit every field, so write->read is the identity and an echoed file rebuilds
// the exact run. Coarse stacks are referred to by preset name (alexnet, vgg,
// tiny); ConfigError for anything else.
// ---------------------------------------------------------------------------

ModelConfig model_config_from(const Config& c);
void write_model_config(Config& c, const ModelConfig& m);

TrainConfig train_config_from(const Config& c);  // train.* and augment.* keys
void write_train_config(Config& c, const TrainConfig& t);

SceneSpec scene_spec_from(const Config& c);
void write_scene_spec(Config& c, const SceneSpec& s);

// Enum names used in config values and reports.
std::string task_name(Task t);
Task task_from_name(const std::string& name);  // ConfigError on unknown names
std::string modality_label(Modality m);
Modality modality_from_name(const std::string& name);

}  // namespace pixelmap
