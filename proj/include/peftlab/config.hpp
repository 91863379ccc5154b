// peftlab/config.hpp

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

#ifndef PEFTLAB_CONFIG_HPP_
#define PEFTLAB_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "peftlab/adapters.hpp"
#include "peftlab/backbone.hpp"
#include "peftlab/datasets.hpp"
#include "peftlab/optim.hpp"

namespace peftlab {

// Flat `key = value` experiment description. Every field round-trips through
// the file form losslessly; unknown keys and malformed values raise with the
// offending line. Doubles are printed in shortest round-trip form.
struct ExperimentConfig {
  // task & plan
  std::string task = "asr";
  std::string plan = "ELP";
  std::string l_variant = "H";
  std::string p_variant = "suffix";
  std::string activation = "auto";  // auto | relu | gelu
  std::size_t lora_rank = 0;
  std::size_t prefix_length = 5;
  std::size_t e_bottleneck = 0;
  std::size_t l_width = 0;
  std::size_t p_length = 5;
  bool unfreeze_backbone_norms = true;

  // backbone
  std::size_t backbone_layers = 12;
  std::size_t backbone_dim = 64;
  std::size_t backbone_heads = 4;
  std::size_t backbone_ffn = 128;
  std::size_t input_channels = 8;
  std::string conv_blocks = "3x2x32,3x2x32";  // kernel x stride x channels
  std::size_t pos_conv_kernel = 9;
  std::size_t pos_conv_groups = 4;
  std::uint64_t backbone_seed = 1;

  // head
  std::size_t head_hidden = 0;  // 0: dim for asv, dim/2 for ser/sic

  // optimization
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  // Random contiguous window cropped from each training utterance for the
  // classification tasks; 0 trains on whole utterances.
  std::size_t train_crop_frames = 0;
  std::string schedule = "warmup-linear";  // warmup-linear | step
  double lr_max = 1e-3;
  double lr_initial = 1e-7;
  std::size_t warmup_steps = 0;  // 0: steps / 10
  double step_gamma = 0.1;
  std::size_t step_size = 10;
  std::uint64_t seed = 5;

  // toy pretraining
  std::size_t pretrain_steps = 0;
  double pretrain_mask_ratio = 0.5;
  double pretrain_lr = 1e-3;

  // dataset
  std::uint64_t data_seed = 11;
  std::size_t train_size = 64;
  std::size_t test_size = 24;
  double noise_sigma = 0.1;
  std::size_t vocab = 5;
  std::size_t min_label_length = 2;
  std::size_t max_label_length = 4;
  std::size_t min_symbol_duration = 10;
  std::size_t max_symbol_duration = 16;
  std::size_t speakers = 8;
  std::size_t utterance_frames = 40;
  std::size_t trial_count = 60;
  int emotion_classes = 4;
  int intent_actions = 6;
  int intent_objects = 14;
  int intent_locations = 4;
  std::size_t snorm_top_k = 50;

  std::string output_dir = "runs/out";

  static ExperimentConfig load(const std::string &path);
  static ExperimentConfig from_text(const std::string &text,
                                    const std::string &origin);
  void save(const std::string &path) const;
  std::string to_text() const;

  // Typed assignment from a string value; throws on unknown key or bad value.
  void set_key(const std::string &key, const std::string &value);
  static const std::vector<std::string> &keys();
  std::vector<std::pair<std::string, std::string>> items() const;

  // Derived objects.
  Task task_kind() const { return task_from_string(task); }
  BackboneConfig backbone_config() const;
  AdapterPlan adapter_plan() const;
  LrSchedule make_schedule(std::size_t total_steps) const;
  std::size_t resolved_head_hidden() const;
  std::size_t resolved_warmup_steps(std::size_t total_steps) const;

  AsrDatasetSpec asr_spec() const;
  SpeakerDatasetSpec speaker_spec() const;
  EmotionDatasetSpec emotion_spec() const;
  IntentDatasetSpec intent_spec() const;
};

std::vector<ConvBlockConfig> parse_conv_blocks(const std::string &text);
std::string format_conv_blocks(const std::vector<ConvBlockConfig> &blocks);

}  // namespace peftlab

#endif  // PEFTLAB_CONFIG_HPP_
