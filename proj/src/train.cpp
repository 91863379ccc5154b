// peftlab/train.cpp

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

#include "peftlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace peftlab {

void apply_freeze_policy(AdaptedModel &model, const AdapterPlan &plan) {
  if (to_string(plan.strategy) != to_string(model.plan().strategy)) {
    throw std::invalid_argument("apply_freeze_policy: plan does not match model");
  }
  model.apply_freeze_policy();
}

std::uint64_t frozen_checksum(const std::vector<Parameter *> &params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void *data, std::size_t bytes) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Parameter *p : params) {
    if (!p->frozen()) continue;
    mix(p->name().data(), p->name().size());
    const auto &v = p->tensor().values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

namespace {

bool is_norm_name(const std::string &name) {
  return name.find(".norm") != std::string::npos;
}

std::string path_prefix(const std::string &name) {
  std::size_t first = name.find('.');
  if (first == std::string::npos) return name;
  std::size_t second = name.find('.', first + 1);
  return second == std::string::npos ? name : name.substr(0, second);
}

}  // namespace

ParamBudgetReport count_parameters(AdaptedModel &model) {
  ParamBudgetReport report;
  std::map<std::string, std::int64_t> by_path;
  for (Parameter *p : model.parameters()) {
    const auto sz = static_cast<std::int64_t>(p->size());
    const std::string &name = p->name();
    by_path[path_prefix(name)] += sz;
    if (name.rfind("backbone.", 0) == 0) {
      report.backbone_total += sz;
      if (!p->frozen() && is_norm_name(name)) {
        report.backbone_norm_learnable += sz;
      }
    } else if (name.rfind("adapter.", 0) == 0) {
      report.adapter_params += sz;
    } else if (name.rfind("head.", 0) == 0) {
      report.head_params += sz;
    }
    if (p->frozen()) {
      report.frozen_total += sz;
    } else {
      report.learnable_total += sz;
    }
  }
  report.by_path.assign(by_path.begin(), by_path.end());
  return report;
}

AnalyticBudget analytic_budget(const BackboneConfig &cfg, const AdapterPlan &plan,
                               const HeadSpec &head) {
  cfg.validate();
  plan.validate(cfg);
  AnalyticBudget b;
  const auto L = static_cast<std::int64_t>(cfg.layers);
  const auto d = static_cast<std::int64_t>(cfg.dim);

  std::int64_t in_ch = static_cast<std::int64_t>(cfg.input_channels);
  for (const auto &blk : cfg.conv_blocks) {
    const auto k = static_cast<std::int64_t>(blk.kernel);
    const auto ch = static_cast<std::int64_t>(blk.channels);
    b.backbone_total += k * in_ch * ch + 2 * ch;
    in_ch = ch;
  }
  b.backbone_total += in_ch * d + d;  // projection
  if (cfg.pos_conv.kernel > 0) {
    const auto k = static_cast<std::int64_t>(cfg.pos_conv.kernel);
    const auto groups = static_cast<std::int64_t>(cfg.pos_conv.groups);
    const std::int64_t gw = d / groups;
    b.backbone_total += groups * (k * gw * gw) + d;
  }
  b.backbone_total +=
      L * static_cast<std::int64_t>(
              TransformerEncoderLayer::parameter_count(cfg.dim, cfg.ffn_dim));

  const auto bottleneck =
      static_cast<std::int64_t>(plan.resolved_bottleneck(cfg.dim));
  const std::int64_t adapter_module = d * bottleneck + bottleneck +
                                      bottleneck * d + d + 2 * d;
  switch (plan.strategy) {
    case Strategy::kFull:
      break;
    case Strategy::kWeight:
      b.adapter_params += L;
      break;
    case Strategy::kLora: {
      const auto r = static_cast<std::int64_t>(plan.resolved_lora_rank(cfg.dim));
      b.adapter_params += L * 4 * (d * r + r * d);
      break;
    }
    case Strategy::kPrefix:
      b.adapter_params +=
          L * 2 * static_cast<std::int64_t>(plan.prefix_length) * d;
      break;
    case Strategy::kEfficient:
      b.adapter_params += L * 2 * adapter_module;
      break;
    case Strategy::kEAdapters:
    case Strategy::kEL:
    case Strategy::kELP:
      b.adapter_params += L * adapter_module;
      break;
    case Strategy::kLAdapters:
      break;
  }
  if (plan.uses_l_adapters()) {
    const auto spec = LAdapterVariantSpec::for_variant(plan.l_variant);
    const auto width = static_cast<std::int64_t>(plan.resolved_l_width(cfg.dim));
    const std::int64_t out_dim = spec.has_fc ? width : d;
    std::int64_t per_layer = 0;
    if (spec.has_fc) per_layer += d * width + width;
    if (spec.has_norm) per_layer += 2 * out_dim;
    b.adapter_params += L * per_layer + L;  // + layer weights
  }
  if (plan.uses_p_adapter() && plan.p_length > 0) {
    const auto m = static_cast<std::int64_t>(plan.p_length);
    b.adapter_params += m * d;
    if (plan.p_variant == PVariant::kNonlinearPrefix ||
        plan.p_variant == PVariant::kNonlinearSuffix) {
      b.adapter_params += 2 * (d * d + d);
    }
  }

  if (plan.effective_unfreeze_norms()) {
    b.backbone_norm_learnable = L * 4 * d;
  }

  const auto head_in = static_cast<std::int64_t>(plan.head_input_dim(cfg.dim));
  if (head.kind == HeadSpec::Kind::kAsr) {
    const auto v = static_cast<std::int64_t>(head.vocab);
    b.head_params = head_in * (v + 1) + (v + 1);
  } else {
    const auto h = static_cast<std::int64_t>(head.hidden);
    const auto c = static_cast<std::int64_t>(head.classes);
    b.head_params = head_in * h + h + h * c + c;
  }
  return b;
}

std::pair<std::int64_t, std::int64_t> storage_cost(const ParamBudgetReport &report,
                                                   std::int64_t tasks) {
  if (tasks < 1) throw std::invalid_argument("storage_cost: K must be >= 1");
  const std::int64_t n = report.backbone_total;
  const std::int64_t m = report.adapters_with_norms();
  const std::int64_t h = report.head_params;
  return {n + tasks * (m + h), tasks * (n + h)};
}

void write_run_record(const std::string &path, const RunRecord &record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (const auto &s : record.history) {
    out << s.step << " " << s.lr << " " << s.loss << "\n";
  }
}

RunRecord read_run_record(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  RunRecord rec;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    StepRecord s;
    if (!(ls >> s.step >> s.lr >> s.loss)) {
      throw std::runtime_error("malformed run-record line in " + path + ": " + line);
    }
    rec.history.push_back(s);
  }
  if (!rec.history.empty()) rec.final_loss = rec.history.back().loss;
  return rec;
}

namespace {

void shuffle_indices(std::vector<std::size_t> &order, Rng &rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.next_index(i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

RunRecord train_loop(AdaptedModel &model, std::size_t dataset_size,
                     const BatchLossFn &batch_loss, const LrSchedule &schedule,
                     std::size_t steps, std::size_t batch_size,
                     std::uint64_t seed) {
  if (dataset_size == 0) throw std::invalid_argument("train_loop: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_loop: batch size must be >= 1");
  auto params = model.parameters();
  RunRecord rec;
  rec.frozen_checksum_before = frozen_checksum(params);
  Adam opt(params);
  Rng rng(seed);
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  std::size_t cursor = dataset_size;

  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      if (cursor >= dataset_size) {
        shuffle_indices(order, rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const double lr = lr_at(schedule, t);
    opt.zero_grad();
    Tensor loss = batch_loss(batch);
    const double loss_value = loss.scalar_value();
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train_loop: non-finite loss at step " +
                               std::to_string(t));
    }
    backward(loss);
    opt.step(lr);
    rec.history.push_back({t, lr, loss_value});
  }
  rec.frozen_checksum_after = frozen_checksum(params);
  if (!rec.history.empty()) rec.final_loss = rec.history.back().loss;
  return rec;
}

std::vector<double> toy_pretrain(Backbone &backbone,
                                 const std::vector<Tensor> &inputs,
                                 std::size_t steps, double mask_ratio,
                                 const PretrainOptions &options) {
  if (mask_ratio < 0.0 || mask_ratio >= 1.0) {
    throw std::invalid_argument("toy_pretrain: mask_ratio must be in [0, 1)");
  }
  if (inputs.empty()) throw std::invalid_argument("toy_pretrain: no inputs");

  // Freeze the conv frontend so reconstruction targets stay put.
  std::vector<Parameter *> params = backbone.parameters();
  std::vector<Parameter *> cnn_params;
  for (Parameter *p : params) {
    if (p->name().rfind("backbone.cnn.", 0) == 0) {
      p->set_frozen(true);
      cnn_params.push_back(p);
    }
  }

  Rng rng(options.seed);
  const std::size_t d = backbone.dim();
  Adam opt(backbone.parameters());

  std::vector<double> losses;
  losses.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    opt.zero_grad();
    Tensor total;
    std::size_t terms = 0;
    for (std::size_t bi = 0; bi < options.batch_size; ++bi) {
      const Tensor &input = inputs[rng.next_index(inputs.size())];
      Tensor x0 = backbone.cnn_encode(input);
      const std::size_t n = x0.rows();
      const auto mask_count =
          static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(n)));
      if (mask_count == 0) continue;
      std::vector<std::size_t> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = i;
      shuffle_indices(rows, rng);
      std::vector<double> keep(n * d, 1.0), masked_only(n * d, 0.0);
      for (std::size_t i = 0; i < mask_count; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          keep[rows[i] * d + j] = 0.0;
          masked_only[rows[i] * d + j] = 1.0;
        }
      }
      Tensor keep_t = Tensor::from_values({n, d}, std::move(keep));
      Tensor masked_t = Tensor::from_values({n, d}, std::move(masked_only));
      Tensor x = mul(x0, keep_t);
      for (std::size_t l = 0; l < backbone.layer_count(); ++l) {
        x = backbone.layer(l).forward(x);
      }
      // The stack output itself regresses the masked frames.
      Tensor err = sub(x, x0.detached());
      Tensor se = mul(mul(err, err), masked_t);
      Tensor item = scale(sum_all(se),
                          1.0 / static_cast<double>(mask_count * d));
      total = terms == 0 ? item : add(total, item);
      ++terms;
    }
    if (terms == 0) {
      losses.push_back(0.0);
      continue;
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(terms));
    losses.push_back(loss.scalar_value());
    backward(loss);
    opt.step(options.lr);
  }

  for (Parameter *p : cnn_params) p->set_frozen(false);
  return losses;
}

}  // namespace peftlab
