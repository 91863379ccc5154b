// peftlab/experiment.cpp

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

#include "peftlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "peftlab/checkpoint.hpp"

namespace peftlab {

namespace fs = std::filesystem;

LayerWeightExport export_layer_weights(const AdaptedModel &model) {
  const Parameter *w = model.layer_weight_parameter();
  if (w == nullptr) {
    throw std::invalid_argument("plan '" + to_string(model.plan().strategy) +
                                "' has no layer weights to export");
  }
  LayerWeightExport out;
  out.raw = w->tensor().values();
  bool all_positive = true;
  double total = 0.0;
  for (double v : out.raw) {
    if (v <= 0.0) all_positive = false;
    total += v;
  }
  out.normalized.resize(out.raw.size());
  if (all_positive) {
    for (std::size_t i = 0; i < out.raw.size(); ++i) {
      out.normalized[i] = out.raw[i] / total;
    }
  } else {
    double mx = out.raw[0];
    for (double v : out.raw) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : out.raw) denom += std::exp(v - mx);
    for (std::size_t i = 0; i < out.raw.size(); ++i) {
      out.normalized[i] = std::exp(out.raw[i] - mx) / denom;
    }
  }
  return out;
}

void write_layer_weights(const std::string &path, const std::vector<double> &w) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (std::size_t l = 0; l < w.size(); ++l) {
    out << (l + 1) << " " << w[l] << "\n";
  }
}

std::vector<double> read_layer_weights(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t index = 0;
    double w = 0.0;
    if (!(ls >> index >> w) || index != out.size() + 1) {
      throw std::runtime_error("malformed layer-weight line in " + path + ": " + line);
    }
    out.push_back(w);
  }
  return out;
}

std::size_t TaskData::train_count() const {
  switch (task) {
    case Task::kAsr: return asr.train.size();
    case Task::kAsv: return speaker.train.size();
    case Task::kSer: return emotion.train.size();
    case Task::kSic: return intent.train.size();
  }
  return 0;
}

TaskData build_task_data(const ExperimentConfig &cfg) {
  TaskData data;
  data.task = cfg.task_kind();
  switch (data.task) {
    case Task::kAsr: data.asr = generate_toy_asr(cfg.asr_spec()); break;
    case Task::kAsv: data.speaker = generate_toy_speaker(cfg.speaker_spec()); break;
    case Task::kSer: data.emotion = generate_toy_emotion(cfg.emotion_spec()); break;
    case Task::kSic: data.intent = generate_toy_intent(cfg.intent_spec()); break;
  }
  return data;
}

namespace {

HeadSpec head_spec_for(const ExperimentConfig &cfg, const TaskData &data) {
  const std::size_t hidden = cfg.resolved_head_hidden();
  switch (data.task) {
    case Task::kAsr:
      return HeadSpec::asr(data.asr.spec.vocab);
    case Task::kAsv:
      return HeadSpec::cls(hidden, data.speaker.spec.speakers);
    case Task::kSer:
      return HeadSpec::cls(hidden, static_cast<std::size_t>(data.emotion.spec.classes));
    case Task::kSic: {
      const auto &s = data.intent.spec.slots;
      return HeadSpec::cls(hidden, static_cast<std::size_t>(
                                       s.actions * s.objects * s.locations));
    }
  }
  throw std::logic_error("unreachable task");
}

std::vector<Tensor> pretrain_inputs(const TaskData &data) {
  std::vector<Tensor> inputs;
  switch (data.task) {
    case Task::kAsr:
      for (const auto &e : data.asr.train) inputs.push_back(e.frames);
      break;
    case Task::kAsv:
      for (const auto &e : data.speaker.train) inputs.push_back(e.frames);
      break;
    case Task::kSer:
      for (const auto &e : data.emotion.train) inputs.push_back(e.frames);
      break;
    case Task::kSic:
      for (const auto &e : data.intent.train) inputs.push_back(e.frames);
      break;
  }
  return inputs;
}

}  // namespace

ExperimentSetup prepare_experiment(const ExperimentConfig &cfg) {
  ExperimentSetup setup;
  setup.cfg = cfg;
  setup.data = build_task_data(cfg);
  setup.backbone = std::make_shared<Backbone>(cfg.backbone_config());
  if (cfg.pretrain_steps > 0) {
    PretrainOptions opts;
    opts.lr = cfg.pretrain_lr;
    opts.seed = cfg.seed ^ 0xa5a5a5a5ULL;
    setup.pretrain_losses =
        toy_pretrain(*setup.backbone, pretrain_inputs(setup.data),
                     cfg.pretrain_steps, cfg.pretrain_mask_ratio, opts);
  }
  setup.model = std::make_unique<AdaptedModel>(
      setup.backbone, cfg.adapter_plan(), head_spec_for(cfg, setup.data),
      cfg.seed);
  return setup;
}

BatchLossFn make_batch_loss(ExperimentSetup &setup) {
  AdaptedModel *model = setup.model.get();
  const TaskData *data = &setup.data;
  const std::size_t crop = setup.cfg.train_crop_frames;
  auto crop_rng = std::make_shared<Rng>(setup.cfg.seed ^ 0x5bd1e995ULL);
  auto cropped = [crop, crop_rng](const Tensor &frames) {
    if (crop == 0 || frames.rows() <= crop) return frames;
    const std::size_t start = crop_rng->next_index(frames.rows() - crop + 1);
    return slice_rows(frames, start, start + crop);
  };
  switch (setup.data.task) {
    case Task::kAsr:
      return [model, data](const std::vector<std::size_t> &batch) {
        Tensor total;
        const int blank = model->asr_head().blank_index();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto &ex = data->asr.train[batch[i]];
          Tensor lp = log_softmax_rows(model->logits(ex.frames));
          Tensor item = ctc_loss(lp, ex.labels, blank);
          total = i == 0 ? item : add(total, item);
        }
        return scale(total, 1.0 / static_cast<double>(batch.size()));
      };
    case Task::kAsv:
      return [model, data, cropped](const std::vector<std::size_t> &batch) {
        Tensor total;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto &ex = data->speaker.train[batch[i]];
          Tensor item =
              cross_entropy_loss(model->logits(cropped(ex.frames)), ex.speaker);
          total = i == 0 ? item : add(total, item);
        }
        return scale(total, 1.0 / static_cast<double>(batch.size()));
      };
    case Task::kSer:
      return [model, data, cropped](const std::vector<std::size_t> &batch) {
        Tensor total;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto &ex = data->emotion.train[batch[i]];
          Tensor item = cross_entropy_loss(model->logits(cropped(ex.frames)),
                                           static_cast<std::size_t>(ex.label));
          total = i == 0 ? item : add(total, item);
        }
        return scale(total, 1.0 / static_cast<double>(batch.size()));
      };
    case Task::kSic:
      return [model, data](const std::vector<std::size_t> &batch) {
        Tensor total;
        const auto &slots = data->intent.spec.slots;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto &ex = data->intent.train[batch[i]];
          const int joint = intent_to_class(ex.label, slots);
          Tensor item = cross_entropy_loss(model->logits(ex.frames),
                                           static_cast<std::size_t>(joint));
          total = i == 0 ? item : add(total, item);
        }
        return scale(total, 1.0 / static_cast<double>(batch.size()));
      };
  }
  throw std::logic_error("unreachable task");
}

namespace {

int argmax_row(const Tensor &logits) {
  const auto &v = logits.values();
  int best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = static_cast<int>(j);
  }
  return best;
}

EvalResult evaluate_asr(ExperimentSetup &setup) {
  EvalResult out;
  out.metric_name = "wer";
  EditOps corpus;
  double loss_sum = 0.0;
  const int blank = setup.model->asr_head().blank_index();
  for (const auto &ex : setup.data.asr.test) {
    Tensor logits = setup.model->logits(ex.frames);
    const std::vector<int> hyp = ctc_greedy_decode(logits, blank);
    corpus = accumulate(corpus, edit_ops(ex.labels, hyp));
    Tensor lp = log_softmax_rows(logits);
    loss_sum += ctc_loss(lp, ex.labels, blank).scalar_value();
  }
  out.metric = word_error_rate(corpus);
  out.mean_loss = loss_sum / static_cast<double>(setup.data.asr.test.size());
  return out;
}

EvalResult evaluate_asv(ExperimentSetup &setup) {
  EvalResult out;
  out.metric_name = "eer";
  const auto &ds = setup.data.speaker;

  Cohort cohort;
  for (const auto &utt : ds.train) {
    cohort.embeddings.push_back(
        SpeakerEmbedding{setup.model->extract_speaker_embedding(utt.frames)});
  }
  cohort.top_k = std::min(setup.cfg.snorm_top_k, cohort.embeddings.size());
  cohort.top_k = std::max<std::size_t>(cohort.top_k, 2);

  std::vector<SpeakerEmbedding> test_emb;
  test_emb.reserve(ds.test.size());
  for (const auto &utt : ds.test) {
    test_emb.push_back(
        SpeakerEmbedding{setup.model->extract_speaker_embedding(utt.frames)});
  }

  std::vector<ScoredTrial> scored;
  for (const auto &trial : ds.trials) {
    const auto &enroll = test_emb[trial.enroll_index];
    const auto &test = test_emb[trial.test_index];
    TrialRecord rec;
    rec.target = trial.same_speaker;
    rec.raw = cosine_score(enroll, test);
    rec.normalized = adaptive_s_norm(rec.raw, enroll, test, cohort);
    out.trials.push_back(rec);
    scored.push_back(ScoredTrial{rec.normalized, rec.target});
  }
  out.metric = equal_error_rate(scored);

  double loss_sum = 0.0;
  for (const auto &utt : ds.test) {
    loss_sum += cross_entropy_loss(setup.model->logits(utt.frames), utt.speaker)
                    .scalar_value();
  }
  out.mean_loss = loss_sum / static_cast<double>(ds.test.size());
  return out;
}

EvalResult evaluate_ser(ExperimentSetup &setup) {
  EvalResult out;
  out.metric_name = "emotion_er";
  double loss_sum = 0.0;
  for (const auto &ex : setup.data.emotion.test) {
    Tensor logits = setup.model->logits(ex.frames);
    out.predictions.push_back(argmax_row(logits));
    out.labels.push_back(ex.label);
    loss_sum += cross_entropy_loss(logits, static_cast<std::size_t>(ex.label))
                    .scalar_value();
  }
  out.metric = emotion_error_rate(out.predictions, out.labels,
                                  setup.data.emotion.spec.classes);
  out.mean_loss = loss_sum / static_cast<double>(setup.data.emotion.test.size());
  return out;
}

EvalResult evaluate_sic(ExperimentSetup &setup) {
  EvalResult out;
  out.metric_name = "intent_er";
  const auto &slots = setup.data.intent.spec.slots;
  double loss_sum = 0.0;
  for (const auto &ex : setup.data.intent.test) {
    Tensor logits = setup.model->logits(ex.frames);
    const int joint = argmax_row(logits);
    out.intent_predictions.push_back(class_to_intent(joint, slots));
    out.intent_labels.push_back(ex.label);
    out.predictions.push_back(joint);
    out.labels.push_back(intent_to_class(ex.label, slots));
    loss_sum += cross_entropy_loss(logits, static_cast<std::size_t>(
                                               intent_to_class(ex.label, slots)))
                    .scalar_value();
  }
  out.metric = intent_error_rate(out.intent_predictions, out.intent_labels, slots);
  out.mean_loss = loss_sum / static_cast<double>(setup.data.intent.test.size());
  return out;
}

}  // namespace

EvalResult evaluate_model(ExperimentSetup &setup) {
  switch (setup.data.task) {
    case Task::kAsr: return evaluate_asr(setup);
    case Task::kAsv: return evaluate_asv(setup);
    case Task::kSer: return evaluate_ser(setup);
    case Task::kSic: return evaluate_sic(setup);
  }
  throw std::logic_error("unreachable task");
}

std::uint64_t backbone_core_checksum(AdaptedModel &model) {
  std::vector<Parameter *> core;
  for (Parameter *p : model.backbone().parameters()) {
    if (p->name().find(".norm") == std::string::npos) core.push_back(p);
  }
  // frozen_checksum hashes frozen entries; hash everything by marking no one.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void *data, std::size_t bytes) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Parameter *p : core) {
    mix(p->name().data(), p->name().size());
    const auto &v = p->tensor().values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

ExperimentResult run_experiment(const ExperimentConfig &cfg,
                                const std::string &load_backbone_dir) {
  ExperimentConfig effective = cfg;
  if (!load_backbone_dir.empty()) effective.pretrain_steps = 0;
  ExperimentSetup setup = prepare_experiment(effective);
  if (!load_backbone_dir.empty()) {
    load_checkpoint((fs::path(load_backbone_dir) / "backbone.bin").string(),
                    (fs::path(load_backbone_dir) / "backbone.manifest").string(),
                    setup.backbone->parameters());
  }
  ExperimentResult result;
  result.output_dir = cfg.output_dir;

  fs::create_directories(cfg.output_dir);
  const auto path = [&](const std::string &name) {
    return (fs::path(cfg.output_dir) / name).string();
  };
  cfg.save(path("config.txt"));

  result.core_checksum_before = backbone_core_checksum(*setup.model);
  BatchLossFn loss = make_batch_loss(setup);
  const LrSchedule schedule = cfg.make_schedule(cfg.steps);
  result.run = train_loop(*setup.model, setup.data.train_count(), loss, schedule,
                          cfg.steps, cfg.batch_size, cfg.seed);
  result.core_checksum_after = backbone_core_checksum(*setup.model);

  result.eval = evaluate_model(setup);
  result.report = count_parameters(*setup.model);

  write_run_record(path("run_record.txt"), result.run);

  if (setup.model->plan().uses_layer_weights()) {
    const LayerWeightExport weights = export_layer_weights(*setup.model);
    write_layer_weights(path("layer_weights.txt"), weights.raw);
    write_layer_weights(path("layer_weights_normalized.txt"), weights.normalized);
  }

  switch (setup.data.task) {
    case Task::kAsr:
      break;
    case Task::kAsv:
      write_trial_scores(path("trials.txt"), result.eval.trials);
      break;
    case Task::kSer:
      write_class_predictions(path("predictions.txt"), result.eval.predictions,
                              result.eval.labels);
      break;
    case Task::kSic:
      write_intent_predictions(path("predictions.txt"),
                               result.eval.intent_predictions,
                               result.eval.intent_labels);
      break;
  }

  {
    std::ofstream out(path("param_report.txt"));
    out << "n_backbone = " << result.report.backbone_total << "\n";
    out << "m_adapters = " << result.report.adapter_params << "\n";
    out << "m_backbone_norms = " << result.report.backbone_norm_learnable << "\n";
    out << "h_head = " << result.report.head_params << "\n";
    out << "learnable_total = " << result.report.learnable_total << "\n";
    out << "frozen_total = " << result.report.frozen_total << "\n";
    for (const auto &[prefix, count] : result.report.by_path) {
      out << "path " << prefix << " = " << count << "\n";
    }
  }

  {
    std::ofstream out(path("summary.txt"));
    out << std::setprecision(17);
    out << "task = " << cfg.task << "\n";
    out << "plan = " << cfg.plan << "\n";
    out << "steps = " << cfg.steps << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "data_seed = " << cfg.data_seed << "\n";
    out << "metric_name = " << result.eval.metric_name << "\n";
    out << "metric = " << result.eval.metric << "\n";
    out << "test_loss = " << result.eval.mean_loss << "\n";
    out << "final_train_loss = " << result.run.final_loss << "\n";
    out << "frozen_checksum_before = " << result.run.frozen_checksum_before << "\n";
    out << "frozen_checksum_after = " << result.run.frozen_checksum_after << "\n";
    out << "core_checksum_before = " << result.core_checksum_before << "\n";
    out << "core_checksum_after = " << result.core_checksum_after << "\n";
    out << "n_backbone = " << result.report.backbone_total << "\n";
    out << "m_adapters = " << result.report.adapter_params << "\n";
    out << "m_backbone_norms = " << result.report.backbone_norm_learnable << "\n";
    out << "h_head = " << result.report.head_params << "\n";
  }

  save_checkpoint(path("backbone.bin"), path("backbone.manifest"),
                  setup.backbone->parameters());
  std::vector<Parameter *> task_params;
  for (Parameter *p : setup.model->parameters()) {
    if (!p->frozen()) task_params.push_back(p);
  }
  save_checkpoint(path("task.bin"), path("task.manifest"), task_params);

  return result;
}

SweepResult sweep_lr(const ExperimentConfig &base, const std::vector<double> &grid) {
  if (grid.empty()) throw std::invalid_argument("sweep_lr: empty grid");
  SweepResult result;
  for (double lr : grid) {
    ExperimentConfig cfg = base;
    cfg.lr_max = lr;
    std::ostringstream dir;
    dir << base.output_dir << "/lr_" << lr;
    cfg.output_dir = dir.str();
    ExperimentResult run = run_experiment(cfg);
    result.entries.push_back(
        SweepEntry{lr, run.eval.metric, run.eval.mean_loss, cfg.output_dir});
  }
  for (std::size_t i = 1; i < result.entries.size(); ++i) {
    if (result.entries[i].val_loss < result.entries[result.best_index].val_loss) {
      result.best_index = i;
    }
  }
  fs::create_directories(base.output_dir);
  std::ofstream out((fs::path(base.output_dir) / "sweep.txt").string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto &e = result.entries[i];
    out << e.lr << " " << e.metric << " " << e.val_loss
        << (i == result.best_index ? " best" : "") << "\n";
  }
  return result;
}

}  // namespace peftlab
