// peftlab/metrics.hpp

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

#ifndef PEFTLAB_METRICS_HPP_
#define PEFTLAB_METRICS_HPP_

#include <cstddef>
#include <string>
#include <vector>

namespace peftlab {

// ---- Edit distance / WER ------------------------------------------------------

struct EditOps {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t total() const { return substitutions + deletions + insertions; }
};

// Minimum-cost alignment with unit costs. Ties during backtrace prefer
// substitution over insertion over deletion, so the (S, D, I) split is
// deterministic.
EditOps edit_ops(const std::vector<std::string> &reference,
                 const std::vector<std::string> &hypothesis);
EditOps edit_ops(const std::vector<int> &reference,
                 const std::vector<int> &hypothesis);

double word_error_rate(const EditOps &ops);

// Corpus-level WER: error counts are summed before dividing.
EditOps accumulate(const EditOps &a, const EditOps &b);

// ---- Verification scoring -------------------------------------------------------

struct SpeakerEmbedding {
  std::vector<double> v;
};

double cosine_score(const SpeakerEmbedding &a, const SpeakerEmbedding &b);

struct Cohort {
  std::vector<SpeakerEmbedding> embeddings;
  std::size_t top_k = 50;
};

// 0.5 * ((s - mu_e)/sigma_e + (s - mu_t)/sigma_t) where the statistics come
// from the top_k cohort scores against each trial side. Standard deviations
// are floored at 1e-12.
double adaptive_s_norm(double raw, const SpeakerEmbedding &enroll,
                       const SpeakerEmbedding &test, const Cohort &cohort);

struct ScoredTrial {
  double score = 0.0;
  bool target = false;  // same-speaker trial
};

enum class FarConvention {
  kNegatives,       // FAR = FP / #negative trials (the standard definition)
  kPrintedFpTp,     // FAR = FP / (FP + TP), kept for fidelity experiments
};

// Threshold sweep over score midpoints; when the false-alarm and
// false-rejection curves have no exact crossing the rates are linearly
// interpolated between the neighboring thresholds.
double equal_error_rate(const std::vector<ScoredTrial> &trials,
                        FarConvention convention = FarConvention::kNegatives);

// ---- Classification error rates ------------------------------------------------

// Macro (class-balanced) error: 1 - mean per-class accuracy. Every class in
// [0, classes) must appear among the labels.
double emotion_error_rate(const std::vector<int> &predictions,
                          const std::vector<int> &labels, int classes);

struct IntentTriple {
  int action = 0;
  int object = 0;
  int location = 0;

  bool operator==(const IntentTriple &o) const {
    return action == o.action && object == o.object && location == o.location;
  }
};

struct IntentSlots {
  int actions = 6;
  int objects = 14;
  int locations = 4;
};

// 1 - exact-match accuracy over (action, object, location) triples.
double intent_error_rate(const std::vector<IntentTriple> &predictions,
                         const std::vector<IntentTriple> &labels,
                         const IntentSlots &slots = IntentSlots{});

// ---- Line-oriented interchange files --------------------------------------------
// Trials: "<label 0|1> <raw_score> <normalized_score>" per line.
// Class predictions: "<prediction> <label>" per line.
// Intent predictions: "<pa> <po> <pl> <la> <lo> <ll>" per line.

struct TrialRecord {
  bool target = false;
  double raw = 0.0;
  double normalized = 0.0;
};

void write_trial_scores(const std::string &path,
                        const std::vector<TrialRecord> &records);
std::vector<TrialRecord> read_trial_scores(const std::string &path);

void write_class_predictions(const std::string &path,
                             const std::vector<int> &predictions,
                             const std::vector<int> &labels);
void read_class_predictions(const std::string &path,
                            std::vector<int> &predictions,
                            std::vector<int> &labels);

void write_intent_predictions(const std::string &path,
                              const std::vector<IntentTriple> &predictions,
                              const std::vector<IntentTriple> &labels);
void read_intent_predictions(const std::string &path,
                             std::vector<IntentTriple> &predictions,
                             std::vector<IntentTriple> &labels);

}  // namespace peftlab

#endif  // PEFTLAB_METRICS_HPP_
