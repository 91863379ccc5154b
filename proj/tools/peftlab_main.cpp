// tools/peftlab_main.cpp

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

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "peftlab/checkpoint.hpp"
#include "peftlab/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace peftlab;

struct CommonArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

// Every config key doubles as a flag; flags win over file values.
void add_config_options(CLI::App *cmd, CommonArgs &args) {
  cmd->add_option("--config", args.config_path,
                  "Experiment config file (key = value lines)");
  for (const auto &key : ExperimentConfig::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [&args, key](const std::string &value) { args.overrides[key] = value; });
  }
}

ExperimentConfig resolve_config(const CommonArgs &args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::load(args.config_path);
  for (const auto &[key, value] : args.overrides) cfg.set_key(key, value);
  return cfg;
}

void load_model_from_dir(ExperimentSetup &setup, const std::string &dir) {
  load_checkpoint((fs::path(dir) / "backbone.bin").string(),
                  (fs::path(dir) / "backbone.manifest").string(),
                  setup.backbone->parameters());
  std::vector<Parameter *> task_params;
  for (Parameter *p : setup.model->parameters()) {
    if (!p->frozen()) task_params.push_back(p);
  }
  load_checkpoint((fs::path(dir) / "task.bin").string(),
                  (fs::path(dir) / "task.manifest").string(), task_params);
}

int cmd_pretrain(const CommonArgs &args) {
  ExperimentConfig cfg = resolve_config(args);
  if (cfg.pretrain_steps == 0) {
    std::cerr << "pretrain: pretrain_steps must be > 0\n";
    return 1;
  }
  ExperimentSetup setup;
  setup.cfg = cfg;
  setup.data = build_task_data(cfg);
  setup.backbone = std::make_shared<Backbone>(cfg.backbone_config());
  std::vector<Tensor> inputs;
  switch (setup.data.task) {
    case Task::kAsr:
      for (const auto &e : setup.data.asr.train) inputs.push_back(e.frames);
      break;
    case Task::kAsv:
      for (const auto &e : setup.data.speaker.train) inputs.push_back(e.frames);
      break;
    case Task::kSer:
      for (const auto &e : setup.data.emotion.train) inputs.push_back(e.frames);
      break;
    case Task::kSic:
      for (const auto &e : setup.data.intent.train) inputs.push_back(e.frames);
      break;
  }
  PretrainOptions opts;
  opts.lr = cfg.pretrain_lr;
  opts.seed = cfg.seed ^ 0xa5a5a5a5ULL;
  const auto losses = toy_pretrain(*setup.backbone, inputs, cfg.pretrain_steps,
                                   cfg.pretrain_mask_ratio, opts);
  fs::create_directories(cfg.output_dir);
  save_checkpoint((fs::path(cfg.output_dir) / "backbone.bin").string(),
                  (fs::path(cfg.output_dir) / "backbone.manifest").string(),
                  setup.backbone->parameters());
  std::cout << "pretrained " << cfg.pretrain_steps << " steps, first loss "
            << (losses.empty() ? 0.0 : losses.front()) << ", last loss "
            << (losses.empty() ? 0.0 : losses.back()) << "\n";
  std::cout << "backbone checkpoint written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_train(const CommonArgs &args, const std::string &load_backbone) {
  ExperimentConfig cfg = resolve_config(args);
  ExperimentResult result = run_experiment(cfg, load_backbone);
  std::cout << result.eval.metric_name << " = " << result.eval.metric << "\n";
  std::cout << "final train loss = " << result.run.final_loss << "\n";
  std::cout << "artifacts in " << result.output_dir << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs &args, const std::string &from) {
  ExperimentConfig cfg = resolve_config(args);
  cfg.pretrain_steps = 0;  // checkpoint already carries the backbone state
  ExperimentSetup setup = prepare_experiment(cfg);
  const std::string dir = from.empty() ? cfg.output_dir : from;
  load_model_from_dir(setup, dir);
  EvalResult eval = evaluate_model(setup);
  std::cout << eval.metric_name << " = " << eval.metric << "\n";
  std::cout << "test loss = " << eval.mean_loss << "\n";
  return 0;
}

int cmd_count_params(const CommonArgs &args, std::int64_t tasks, bool analytic) {
  ExperimentConfig cfg = resolve_config(args);
  if (analytic) {
    const AnalyticBudget b = analytic_budget(
        cfg.backbone_config(), cfg.adapter_plan(),
        cfg.task_kind() == Task::kAsr
            ? HeadSpec::asr(cfg.vocab)
            : HeadSpec::cls(cfg.resolved_head_hidden(), 2));
    const std::int64_t m = b.adapter_params + b.backbone_norm_learnable;
    std::cout << "n_backbone = " << b.backbone_total << "\n";
    std::cout << "m_adapters = " << b.adapter_params << "\n";
    std::cout << "m_backbone_norms = " << b.backbone_norm_learnable << "\n";
    std::cout << "h_head = " << b.head_params << "\n";
    std::cout << "storage_adapter = " << b.backbone_total + tasks * (m + b.head_params)
              << "\n";
    std::cout << "storage_full_ft = " << tasks * (b.backbone_total + b.head_params)
              << "\n";
    return 0;
  }
  ExperimentSetup setup = prepare_experiment(cfg);
  ParamBudgetReport report = count_parameters(*setup.model);
  const auto [adapter_total, full_total] = storage_cost(report, tasks);
  std::cout << "n_backbone = " << report.backbone_total << "\n";
  std::cout << "m_adapters = " << report.adapter_params << "\n";
  std::cout << "m_backbone_norms = " << report.backbone_norm_learnable << "\n";
  std::cout << "h_head = " << report.head_params << "\n";
  std::cout << "learnable_total = " << report.learnable_total << "\n";
  std::cout << "frozen_total = " << report.frozen_total << "\n";
  std::cout << "storage_adapter = " << adapter_total << "\n";
  std::cout << "storage_full_ft = " << full_total << "\n";
  for (const auto &[prefix, count] : report.by_path) {
    std::cout << "path " << prefix << " = " << count << "\n";
  }
  return 0;
}

int cmd_export_weights(const CommonArgs &args, const std::string &from) {
  ExperimentConfig cfg = resolve_config(args);
  cfg.pretrain_steps = 0;
  ExperimentSetup setup = prepare_experiment(cfg);
  if (!from.empty()) load_model_from_dir(setup, from);
  const LayerWeightExport weights = export_layer_weights(*setup.model);
  std::cout << std::setprecision(17);
  for (std::size_t l = 0; l < weights.raw.size(); ++l) {
    std::cout << (l + 1) << " " << weights.raw[l] << " " << weights.normalized[l]
              << "\n";
  }
  return 0;
}

int cmd_sweep_lr(const CommonArgs &args) {
  ExperimentConfig cfg = resolve_config(args);
  SweepResult sweep = sweep_lr(cfg);
  for (std::size_t i = 0; i < sweep.entries.size(); ++i) {
    const auto &e = sweep.entries[i];
    std::cout << "lr " << e.lr << ": metric " << e.metric << ", val loss "
              << e.val_loss << (i == sweep.best_index ? "  <- best" : "") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{
      "peftlab: adapter-based parameter-efficient fine-tuning workbench on "
      "synthetic speech-like tasks"};
  app.require_subcommand(1);

  CommonArgs pretrain_args, train_args, eval_args, count_args, export_args,
      sweep_args;
  std::string train_load_backbone, eval_from, export_from;
  std::int64_t count_tasks = 1;
  bool count_analytic = false;

  CLI::App *pretrain = app.add_subcommand("pretrain", "Toy-pretrain a backbone");
  add_config_options(pretrain, pretrain_args);

  CLI::App *train = app.add_subcommand("train", "Run one fine-tuning experiment");
  add_config_options(train, train_args);
  train->add_option("--load-backbone", train_load_backbone,
                    "Directory with a backbone checkpoint to start from");

  CLI::App *evaluate = app.add_subcommand("evaluate", "Evaluate a trained run");
  add_config_options(evaluate, eval_args);
  evaluate->add_option("--from", eval_from,
                       "Run directory with checkpoints (default: output_dir)");

  CLI::App *count = app.add_subcommand("count-params", "Parameter budget report");
  add_config_options(count, count_args);
  count->add_option("--tasks", count_tasks, "Task count K for storage totals");
  count->add_flag("--analytic", count_analytic,
                  "Closed-form count, no weight materialization");

  CLI::App *exportw = app.add_subcommand("export-weights", "Layer-weight export");
  add_config_options(exportw, export_args);
  exportw->add_option("--from", export_from, "Run directory with checkpoints");

  CLI::App *sweep = app.add_subcommand("sweep-lr", "Best-of-grid learning-rate sweep");
  add_config_options(sweep, sweep_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) return cmd_pretrain(pretrain_args);
    if (train->parsed()) return cmd_train(train_args, train_load_backbone);
    if (evaluate->parsed()) return cmd_evaluate(eval_args, eval_from);
    if (count->parsed()) return cmd_count_params(count_args, count_tasks, count_analytic);
    if (exportw->parsed()) return cmd_export_weights(export_args, export_from);
    if (sweep->parsed()) return cmd_sweep_lr(sweep_args);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
