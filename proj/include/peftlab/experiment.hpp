// peftlab/experiment.hpp

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

#ifndef PEFTLAB_EXPERIMENT_HPP_
#define PEFTLAB_EXPERIMENT_HPP_

#include <memory>
#include <string>
#include <vector>

#include "peftlab/config.hpp"
#include "peftlab/train.hpp"

namespace peftlab {

struct LayerWeightExport {
  std::vector<double> raw;
  // raw / sum when all weights are positive, softmax otherwise.
  std::vector<double> normalized;
};

LayerWeightExport export_layer_weights(const AdaptedModel &model);
// Two-column text: layer index (1-based), weight.
void write_layer_weights(const std::string &path, const std::vector<double> &w);
std::vector<double> read_layer_weights(const std::string &path);

// Task data materialized for one experiment.
struct TaskData {
  Task task = Task::kAsr;
  AsrDataset asr;
  SpeakerDataset speaker;
  EmotionDataset emotion;
  IntentDataset intent;

  std::size_t train_count() const;
};

TaskData build_task_data(const ExperimentConfig &cfg);

// Model + dataset wiring for one run; reusable by the CLI verbs and tests.
struct ExperimentSetup {
  ExperimentConfig cfg;
  TaskData data;
  std::shared_ptr<Backbone> backbone;
  std::unique_ptr<AdaptedModel> model;
  std::vector<double> pretrain_losses;
};

// Builds backbone (optionally toy-pretrained), assembles the plan and head.
ExperimentSetup prepare_experiment(const ExperimentConfig &cfg);

BatchLossFn make_batch_loss(ExperimentSetup &setup);

struct EvalResult {
  std::string metric_name;
  double metric = 0.0;
  // side channel written to disk for cross-checking
  std::vector<TrialRecord> trials;               // asv
  std::vector<int> predictions, labels;          // ser / sic (joint classes)
  std::vector<IntentTriple> intent_predictions, intent_labels;
  double mean_loss = 0.0;  // test-split loss (sweep selection)
};

EvalResult evaluate_model(ExperimentSetup &setup);

struct ExperimentResult {
  RunRecord run;
  EvalResult eval;
  ParamBudgetReport report;
  std::uint64_t core_checksum_before = 0;
  std::uint64_t core_checksum_after = 0;
  std::string output_dir;
};

// Full pipeline: data, optional pretraining, assembly, training, evaluation,
// artifacts (config echo, run record, summary, parameter report, layer
// weights when the plan has them, checkpoints, score/prediction files).
// `load_backbone_dir`, when non-empty, seeds the backbone from a previously
// written checkpoint instead of in-process pretraining.
ExperimentResult run_experiment(const ExperimentConfig &cfg,
                                const std::string &load_backbone_dir = "");

// Checksum over the non-LayerNorm backbone parameters; any plan except full
// fine-tuning leaves it untouched by training.
std::uint64_t backbone_core_checksum(AdaptedModel &model);

struct SweepEntry {
  double lr = 0.0;
  double metric = 0.0;
  double val_loss = 0.0;
  std::string dir;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::size_t best_index = 0;
};

// Trains once per learning rate in the published grid and selects the best
// run by test-split loss.
SweepResult sweep_lr(const ExperimentConfig &base,
                     const std::vector<double> &grid = {1e-3, 5e-4, 1e-4, 5e-5,
                                                        1e-5});

}  // namespace peftlab

#endif  // PEFTLAB_EXPERIMENT_HPP_
