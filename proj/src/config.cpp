// peftlab/config.cpp

// Copyright 2026  The peftlab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "peftlab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace peftlab {

namespace {

std::string trim(const std::string &s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string &v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

std::size_t parse_size(const std::string &v) {
  return static_cast<std::size_t>(parse_u64(v));
}

int parse_int(const std::string &v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string &v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception &) {
    throw std::invalid_argument("expected a real number, got '" + v + "'");
  }
}

bool parse_bool(const std::string &v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::logic_error("double formatting failed");
  return std::string(buf, ptr);
}

struct Field {
  const char *key;
  std::function<void(ExperimentConfig &, const std::string &)> set;
  std::function<std::string(const ExperimentConfig &)> get;
};

const std::vector<Field> &fields() {
  static const std::vector<Field> table = {
#define PL_STR(KEY, MEMBER)                                            \
  Field{KEY, [](ExperimentConfig &c, const std::string &v) { c.MEMBER = v; }, \
        [](const ExperimentConfig &c) { return c.MEMBER; }}
#define PL_SIZE(KEY, MEMBER)                                      \
  Field{KEY,                                                      \
        [](ExperimentConfig &c, const std::string &v) {           \
          c.MEMBER = parse_size(v);                               \
        },                                                        \
        [](const ExperimentConfig &c) { return std::to_string(c.MEMBER); }}
#define PL_U64(KEY, MEMBER)                                       \
  Field{KEY,                                                      \
        [](ExperimentConfig &c, const std::string &v) {           \
          c.MEMBER = parse_u64(v);                                \
        },                                                        \
        [](const ExperimentConfig &c) { return std::to_string(c.MEMBER); }}
#define PL_INT(KEY, MEMBER)                                       \
  Field{KEY,                                                      \
        [](ExperimentConfig &c, const std::string &v) {           \
          c.MEMBER = parse_int(v);                                \
        },                                                        \
        [](const ExperimentConfig &c) { return std::to_string(c.MEMBER); }}
#define PL_REAL(KEY, MEMBER)                                      \
  Field{KEY,                                                      \
        [](ExperimentConfig &c, const std::string &v) {           \
          c.MEMBER = parse_real(v);                               \
        },                                                        \
        [](const ExperimentConfig &c) { return format_real(c.MEMBER); }}
#define PL_BOOL(KEY, MEMBER)                                      \
  Field{KEY,                                                      \
        [](ExperimentConfig &c, const std::string &v) {           \
          c.MEMBER = parse_bool(v);                               \
        },                                                        \
        [](const ExperimentConfig &c) {                           \
          return std::string(c.MEMBER ? "true" : "false");        \
        }}
      PL_STR("task", task),
      PL_STR("plan", plan),
      PL_STR("l_variant", l_variant),
      PL_STR("p_variant", p_variant),
      PL_STR("activation", activation),
      PL_SIZE("lora_rank", lora_rank),
      PL_SIZE("prefix_length", prefix_length),
      PL_SIZE("e_bottleneck", e_bottleneck),
      PL_SIZE("l_width", l_width),
      PL_SIZE("p_length", p_length),
      PL_BOOL("unfreeze_backbone_norms", unfreeze_backbone_norms),
      PL_SIZE("backbone_layers", backbone_layers),
      PL_SIZE("backbone_dim", backbone_dim),
      PL_SIZE("backbone_heads", backbone_heads),
      PL_SIZE("backbone_ffn", backbone_ffn),
      PL_SIZE("input_channels", input_channels),
      PL_STR("conv_blocks", conv_blocks),
      PL_SIZE("pos_conv_kernel", pos_conv_kernel),
      PL_SIZE("pos_conv_groups", pos_conv_groups),
      PL_U64("backbone_seed", backbone_seed),
      PL_SIZE("head_hidden", head_hidden),
      PL_SIZE("steps", steps),
      PL_SIZE("batch_size", batch_size),
      PL_SIZE("train_crop_frames", train_crop_frames),
      PL_STR("schedule", schedule),
      PL_REAL("lr_max", lr_max),
      PL_REAL("lr_initial", lr_initial),
      PL_SIZE("warmup_steps", warmup_steps),
      PL_REAL("step_gamma", step_gamma),
      PL_SIZE("step_size", step_size),
      PL_U64("seed", seed),
      PL_SIZE("pretrain_steps", pretrain_steps),
      PL_REAL("pretrain_mask_ratio", pretrain_mask_ratio),
      PL_REAL("pretrain_lr", pretrain_lr),
      PL_U64("data_seed", data_seed),
      PL_SIZE("train_size", train_size),
      PL_SIZE("test_size", test_size),
      PL_REAL("noise_sigma", noise_sigma),
      PL_SIZE("vocab", vocab),
      PL_SIZE("min_label_length", min_label_length),
      PL_SIZE("max_label_length", max_label_length),
      PL_SIZE("min_symbol_duration", min_symbol_duration),
      PL_SIZE("max_symbol_duration", max_symbol_duration),
      PL_SIZE("speakers", speakers),
      PL_SIZE("utterance_frames", utterance_frames),
      PL_SIZE("trial_count", trial_count),
      PL_INT("emotion_classes", emotion_classes),
      PL_INT("intent_actions", intent_actions),
      PL_INT("intent_objects", intent_objects),
      PL_INT("intent_locations", intent_locations),
      PL_SIZE("snorm_top_k", snorm_top_k),
      PL_STR("output_dir", output_dir),
#undef PL_STR
#undef PL_SIZE
#undef PL_U64
#undef PL_INT
#undef PL_REAL
#undef PL_BOOL
  };
  return table;
}

}  // namespace

std::vector<ConvBlockConfig> parse_conv_blocks(const std::string &text) {
  std::vector<ConvBlockConfig> blocks;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    ConvBlockConfig b;
    std::size_t x1 = item.find('x');
    std::size_t x2 = x1 == std::string::npos ? std::string::npos
                                             : item.find('x', x1 + 1);
    if (x1 == std::string::npos || x2 == std::string::npos) {
      throw std::invalid_argument("conv block '" + item +
                                  "' is not kernel x stride x channels");
    }
    b.kernel = parse_size(item.substr(0, x1));
    b.stride = parse_size(item.substr(x1 + 1, x2 - x1 - 1));
    b.channels = parse_size(item.substr(x2 + 1));
    blocks.push_back(b);
  }
  if (blocks.empty()) {
    throw std::invalid_argument("conv_blocks must name at least one block");
  }
  return blocks;
}

std::string format_conv_blocks(const std::vector<ConvBlockConfig> &blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(blocks[i].kernel) + "x" +
           std::to_string(blocks[i].stride) + "x" +
           std::to_string(blocks[i].channels);
  }
  return out;
}

ExperimentConfig ExperimentConfig::from_text(const std::string &text,
                                             const std::string &origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + stripped +
                                  "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      cfg.set_key(key, value);
    } catch (const std::exception &e) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": field '" + key + "': " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto &[key, value] : items()) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

void ExperimentConfig::save(const std::string &path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_text();
}

void ExperimentConfig::set_key(const std::string &key, const std::string &value) {
  for (const auto &f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("unknown key '" + key + "'");
}

const std::vector<std::string> &ExperimentConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto &f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return out;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto &f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

BackboneConfig ExperimentConfig::backbone_config() const {
  BackboneConfig cfg;
  cfg.layers = backbone_layers;
  cfg.dim = backbone_dim;
  cfg.heads = backbone_heads;
  cfg.ffn_dim = backbone_ffn;
  cfg.input_channels = input_channels;
  cfg.conv_blocks = parse_conv_blocks(conv_blocks);
  cfg.pos_conv = {pos_conv_kernel, pos_conv_groups};
  cfg.seed = backbone_seed;
  cfg.validate();
  return cfg;
}

AdapterPlan ExperimentConfig::adapter_plan() const {
  AdapterPlan adapter = AdapterPlan::for_task(strategy_from_string(plan),
                                              task_kind());
  if (activation == "relu") {
    adapter.activation = Activation::kRelu;
  } else if (activation == "gelu") {
    adapter.activation = Activation::kGelu;
  } else if (activation != "auto") {
    throw std::invalid_argument("activation must be auto, relu or gelu");
  }
  adapter.l_variant = l_variant_from_string(l_variant);
  adapter.p_variant = p_variant_from_string(p_variant);
  adapter.lora_rank = lora_rank;
  adapter.prefix_length = prefix_length;
  adapter.e_bottleneck = e_bottleneck;
  adapter.l_width = l_width;
  adapter.p_length = p_length;
  adapter.unfreeze_backbone_norms = unfreeze_backbone_norms;
  return adapter;
}

std::size_t ExperimentConfig::resolved_warmup_steps(std::size_t total_steps) const {
  if (warmup_steps > 0) return warmup_steps;
  return std::max<std::size_t>(1, total_steps / 10);
}

LrSchedule ExperimentConfig::make_schedule(std::size_t total_steps) const {
  if (schedule == "warmup-linear") {
    const std::size_t warm = resolved_warmup_steps(total_steps);
    const std::size_t total = std::max(total_steps, warm + 1);
    return LrSchedule::warmup_linear(lr_initial, lr_max, warm, total);
  }
  if (schedule == "step") {
    return LrSchedule::step_decay(lr_max, step_gamma, step_size);
  }
  throw std::invalid_argument("schedule must be warmup-linear or step, got '" +
                              schedule + "'");
}

std::size_t ExperimentConfig::resolved_head_hidden() const {
  if (head_hidden > 0) return head_hidden;
  const Task t = task_kind();
  if (t == Task::kAsv) return backbone_dim;
  return std::max<std::size_t>(16, backbone_dim / 2);
}

AsrDatasetSpec ExperimentConfig::asr_spec() const {
  AsrDatasetSpec s;
  s.vocab = vocab;
  s.channels = input_channels;
  s.train_size = train_size;
  s.test_size = test_size;
  s.min_label_length = min_label_length;
  s.max_label_length = max_label_length;
  s.min_symbol_duration = min_symbol_duration;
  s.max_symbol_duration = max_symbol_duration;
  s.noise_sigma = noise_sigma;
  s.seed = data_seed;
  return s;
}

SpeakerDatasetSpec ExperimentConfig::speaker_spec() const {
  SpeakerDatasetSpec s;
  s.speakers = speakers;
  s.train_per_speaker = std::max<std::size_t>(1, train_size / speakers);
  s.test_per_speaker = std::max<std::size_t>(2, test_size / speakers);
  s.frames = utterance_frames;
  s.channels = input_channels;
  s.noise_sigma = noise_sigma;
  s.trial_count = trial_count;
  s.seed = data_seed;
  return s;
}

EmotionDatasetSpec ExperimentConfig::emotion_spec() const {
  EmotionDatasetSpec s;
  s.classes = emotion_classes;
  const auto classes = static_cast<std::size_t>(emotion_classes);
  s.train_per_class = std::max<std::size_t>(1, train_size / classes);
  s.test_per_class = std::max<std::size_t>(1, test_size / classes);
  s.frames = utterance_frames;
  s.channels = input_channels;
  s.noise_sigma = noise_sigma;
  s.seed = data_seed;
  return s;
}

IntentDatasetSpec ExperimentConfig::intent_spec() const {
  IntentDatasetSpec s;
  s.slots = IntentSlots{intent_actions, intent_objects, intent_locations};
  s.train_size = train_size;
  s.test_size = test_size;
  s.segment_frames = std::max<std::size_t>(1, utterance_frames / 3);
  s.channels = input_channels;
  s.noise_sigma = noise_sigma;
  s.seed = data_seed;
  return s;
}

}  // namespace peftlab
