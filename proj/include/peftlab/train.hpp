// peftlab/train.hpp

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

#ifndef PEFTLAB_TRAIN_HPP_
#define PEFTLAB_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "peftlab/adapters.hpp"
#include "peftlab/optim.hpp"

namespace peftlab {

// Learnable set = adapters, encoder LayerNorms (when the plan says so), and
// the head; everything else frozen. The full plan unfreezes all parameters.
void apply_freeze_policy(AdaptedModel &model, const AdapterPlan &plan);

// FNV-1a over names and raw value bytes of the frozen parameters; two runs
// that keep frozen weights intact produce identical fingerprints.
std::uint64_t frozen_checksum(const std::vector<Parameter *> &params);

struct ParamBudgetReport {
  std::int64_t backbone_total = 0;          // N
  std::int64_t adapter_params = 0;          // adapter modules only
  std::int64_t backbone_norm_learnable = 0; // unfrozen backbone LayerNorms
  std::int64_t head_params = 0;             // H
  std::int64_t learnable_total = 0;
  std::int64_t frozen_total = 0;
  std::vector<std::pair<std::string, std::int64_t>> by_path;

  // M under the two readings: adapters alone, or adapters plus the unfrozen
  // backbone LayerNorms.
  std::int64_t adapters_only() const { return adapter_params; }
  std::int64_t adapters_with_norms() const {
    return adapter_params + backbone_norm_learnable;
  }
};

ParamBudgetReport count_parameters(AdaptedModel &model);

// Analytic counterpart used for full-scale budget checks without
// materializing the weights. Mirrors the module definitions exactly; the two
// routes are cross-checked at desk dimensions in the tests.
struct AnalyticBudget {
  std::int64_t backbone_total = 0;
  std::int64_t adapter_params = 0;
  std::int64_t backbone_norm_learnable = 0;
  std::int64_t head_params = 0;
};
AnalyticBudget analytic_budget(const BackboneConfig &cfg, const AdapterPlan &plan,
                               const HeadSpec &head);

// (N + K (M + H), K (N + H)) with M = adapters + unfrozen norms.
std::pair<std::int64_t, std::int64_t> storage_cost(const ParamBudgetReport &report,
                                                   std::int64_t tasks);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct RunRecord {
  std::vector<StepRecord> history;
  std::uint64_t frozen_checksum_before = 0;
  std::uint64_t frozen_checksum_after = 0;
  double final_loss = 0.0;
};

void write_run_record(const std::string &path, const RunRecord &record);
RunRecord read_run_record(const std::string &path);

// Batch loss callback: given example indices, builds the scalar loss for the
// current graph.
using BatchLossFn = std::function<Tensor(const std::vector<std::size_t> &)>;

// Adam steps over seeded shuffles of the dataset. Loss is recorded every
// step; a non-finite loss aborts with a diagnostic naming the step.
RunRecord train_loop(AdaptedModel &model, std::size_t dataset_size,
                     const BatchLossFn &batch_loss, const LrSchedule &schedule,
                     std::size_t steps, std::size_t batch_size,
                     std::uint64_t seed);

struct PretrainOptions {
  double lr = 1e-3;
  std::size_t batch_size = 4;
  std::uint64_t seed = 7;
};

// Toy self-supervised pretraining: mask a fraction of the CNN-output frames,
// run the encoder stack, and regress the masked frames back under squared
// error at the stack output. The conv frontend stays frozen so the
// regression targets are stable. Returns the loss history.
std::vector<double> toy_pretrain(Backbone &backbone,
                                 const std::vector<Tensor> &inputs,
                                 std::size_t steps, double mask_ratio,
                                 const PretrainOptions &options = {});

}  // namespace peftlab

#endif  // PEFTLAB_TRAIN_HPP_
