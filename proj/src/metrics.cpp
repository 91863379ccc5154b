// peftlab/metrics.cpp

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

#include "peftlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace peftlab {

namespace {

// DP over (ref consumed, hyp consumed). Backtrace preference on cost ties:
// diagonal (match/substitution), then insertion, then deletion.
template <typename Token>
EditOps edit_ops_impl(const std::vector<Token> &ref,
                      const std::vector<Token> &hyp) {
  if (ref.empty()) {
    throw std::invalid_argument("edit_ops: reference must be non-empty");
  }
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> dp((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t & {
    return dp[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t ins = at(i, j - 1) + 1;
      const std::size_t del = at(i - 1, j) + 1;
      at(i, j) = std::min({diag, ins, del});
    }
  }
  EditOps ops;
  ops.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      if (diag == at(i, j)) {
        if (!(ref[i - 1] == hyp[j - 1])) ++ops.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j - 1) + 1 == at(i, j)) {
      ++ops.insertions;
      --j;
      continue;
    }
    ++ops.deletions;
    --i;
  }
  return ops;
}

}  // namespace

EditOps edit_ops(const std::vector<std::string> &reference,
                 const std::vector<std::string> &hypothesis) {
  return edit_ops_impl(reference, hypothesis);
}

EditOps edit_ops(const std::vector<int> &reference,
                 const std::vector<int> &hypothesis) {
  return edit_ops_impl(reference, hypothesis);
}

double word_error_rate(const EditOps &ops) {
  if (ops.reference_length == 0) {
    throw std::invalid_argument("word_error_rate: reference length must be >= 1");
  }
  return static_cast<double>(ops.total()) /
         static_cast<double>(ops.reference_length);
}

EditOps accumulate(const EditOps &a, const EditOps &b) {
  EditOps out;
  out.substitutions = a.substitutions + b.substitutions;
  out.deletions = a.deletions + b.deletions;
  out.insertions = a.insertions + b.insertions;
  out.reference_length = a.reference_length + b.reference_length;
  return out;
}

double cosine_score(const SpeakerEmbedding &a, const SpeakerEmbedding &b) {
  if (a.v.size() != b.v.size() || a.v.empty()) {
    throw std::invalid_argument("cosine_score: embeddings must have equal nonzero size");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_score: undefined for a zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// Mean and (floored) population standard deviation of the top_k scores of the
// cohort against one trial side.
std::pair<double, double> cohort_stats(const SpeakerEmbedding &side,
                                       const Cohort &cohort) {
  std::vector<double> scores;
  scores.reserve(cohort.embeddings.size());
  for (const auto &e : cohort.embeddings) scores.push_back(cosine_score(side, e));
  std::partial_sort(scores.begin(), scores.begin() + cohort.top_k, scores.end(),
                    std::greater<double>());
  double mean = 0.0;
  for (std::size_t i = 0; i < cohort.top_k; ++i) mean += scores[i];
  mean /= static_cast<double>(cohort.top_k);
  double var = 0.0;
  for (std::size_t i = 0; i < cohort.top_k; ++i) {
    const double c = scores[i] - mean;
    var += c * c;
  }
  var /= static_cast<double>(cohort.top_k);
  return {mean, std::max(std::sqrt(var), 1e-12)};
}

}  // namespace

double adaptive_s_norm(double raw, const SpeakerEmbedding &enroll,
                       const SpeakerEmbedding &test, const Cohort &cohort) {
  if (cohort.top_k < 2) {
    throw std::invalid_argument("adaptive_s_norm: top_k must be >= 2");
  }
  if (cohort.top_k > cohort.embeddings.size()) {
    throw std::invalid_argument("adaptive_s_norm: top_k " +
                                std::to_string(cohort.top_k) +
                                " exceeds cohort size " +
                                std::to_string(cohort.embeddings.size()));
  }
  const auto [mu_e, sigma_e] = cohort_stats(enroll, cohort);
  const auto [mu_t, sigma_t] = cohort_stats(test, cohort);
  return 0.5 * ((raw - mu_e) / sigma_e + (raw - mu_t) / sigma_t);
}

double equal_error_rate(const std::vector<ScoredTrial> &trials,
                        FarConvention convention) {
  std::size_t positives = 0, negatives = 0;
  for (const auto &t : trials) (t.target ? positives : negatives)++;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument(
        "equal_error_rate: need at least one target and one non-target trial");
  }

  std::vector<double> scores;
  scores.reserve(trials.size());
  for (const auto &t : trials) scores.push_back(t.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  // Candidate thresholds: below all scores, midpoints, above all scores.
  std::vector<double> thresholds;
  thresholds.push_back(scores.front() - 1.0);
  for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
    thresholds.push_back(0.5 * (scores[i] + scores[i + 1]));
  }
  thresholds.push_back(scores.back() + 1.0);

  std::vector<double> far(thresholds.size()), frr(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double th = thresholds[i];
    std::size_t fp = 0, fn = 0, tp = 0;
    for (const auto &t : trials) {
      const bool accept = t.score >= th;
      if (accept && !t.target) ++fp;
      if (!accept && t.target) ++fn;
      if (accept && t.target) ++tp;
    }
    if (convention == FarConvention::kNegatives) {
      far[i] = static_cast<double>(fp) / static_cast<double>(negatives);
    } else {
      far[i] = (fp + tp) == 0 ? 0.0
                              : static_cast<double>(fp) /
                                    static_cast<double>(fp + tp);
    }
    frr[i] = static_cast<double>(fn) / static_cast<double>(positives);
  }

  // far - frr runs from +1 down to -1; find the sign change and interpolate
  // in rate space (score-space interpolation would break monotone-transform
  // invariance).
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double diff = far[i] - frr[i];
    if (diff == 0.0) return far[i];
    if (diff < 0.0) {
      if (i == 0) return frr[0];
      const double prev = far[i - 1] - frr[i - 1];
      const double t = prev / (prev - diff);
      return frr[i - 1] + t * (frr[i] - frr[i - 1]);
    }
  }
  return far.back();
}

double emotion_error_rate(const std::vector<int> &predictions,
                          const std::vector<int> &labels, int classes) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("emotion_error_rate: predictions and labels must align");
  }
  if (classes < 1) throw std::invalid_argument("emotion_error_rate: classes must be >= 1");
  std::vector<std::size_t> total(classes, 0), correct(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw std::invalid_argument("emotion_error_rate: label " +
                                  std::to_string(labels[i]) +
                                  " outside of " + std::to_string(classes) +
                                  " classes");
    }
    ++total[labels[i]];
    if (predictions[i] == labels[i]) ++correct[labels[i]];
  }
  double acc = 0.0;
  for (int c = 0; c < classes; ++c) {
    if (total[c] == 0) {
      throw std::invalid_argument("emotion_error_rate: class " +
                                  std::to_string(c) +
                                  " absent, per-class accuracy undefined");
    }
    acc += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
  }
  return 1.0 - acc / static_cast<double>(classes);
}

double intent_error_rate(const std::vector<IntentTriple> &predictions,
                         const std::vector<IntentTriple> &labels,
                         const IntentSlots &slots) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("intent_error_rate: predictions and labels must align");
  }
  auto check = [&](const IntentTriple &t, const char *what) {
    if (t.action < 0 || t.action >= slots.actions || t.object < 0 ||
        t.object >= slots.objects || t.location < 0 ||
        t.location >= slots.locations) {
      throw std::invalid_argument(std::string("intent_error_rate: ") + what +
                                  " triple outside slot vocabularies");
    }
  };
  std::size_t exact = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check(predictions[i], "prediction");
    check(labels[i], "label");
    if (predictions[i] == labels[i]) ++exact;
  }
  return 1.0 - static_cast<double>(exact) / static_cast<double>(labels.size());
}

// ---- Interchange files ----------------------------------------------------------

namespace {

std::ofstream open_out(const std::string &path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return in;
}

}  // namespace

void write_trial_scores(const std::string &path,
                        const std::vector<TrialRecord> &records) {
  auto out = open_out(path);
  for (const auto &r : records) {
    out << (r.target ? 1 : 0) << " " << r.raw << " " << r.normalized << "\n";
  }
}

std::vector<TrialRecord> read_trial_scores(const std::string &path) {
  auto in = open_in(path);
  std::vector<TrialRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int label = 0;
    TrialRecord r;
    if (!(ls >> label >> r.raw >> r.normalized)) {
      throw std::runtime_error("malformed trial line in " + path + ": " + line);
    }
    r.target = label != 0;
    records.push_back(r);
  }
  return records;
}

void write_class_predictions(const std::string &path,
                             const std::vector<int> &predictions,
                             const std::vector<int> &labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("write_class_predictions: size mismatch");
  }
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << predictions[i] << " " << labels[i] << "\n";
  }
}

void read_class_predictions(const std::string &path,
                            std::vector<int> &predictions,
                            std::vector<int> &labels) {
  auto in = open_in(path);
  predictions.clear();
  labels.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int p = 0, l = 0;
    if (!(ls >> p >> l)) {
      throw std::runtime_error("malformed prediction line in " + path + ": " + line);
    }
    predictions.push_back(p);
    labels.push_back(l);
  }
}

void write_intent_predictions(const std::string &path,
                              const std::vector<IntentTriple> &predictions,
                              const std::vector<IntentTriple> &labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("write_intent_predictions: size mismatch");
  }
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto &p = predictions[i];
    const auto &l = labels[i];
    out << p.action << " " << p.object << " " << p.location << " " << l.action
        << " " << l.object << " " << l.location << "\n";
  }
}

void read_intent_predictions(const std::string &path,
                             std::vector<IntentTriple> &predictions,
                             std::vector<IntentTriple> &labels) {
  auto in = open_in(path);
  predictions.clear();
  labels.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    IntentTriple p, l;
    if (!(ls >> p.action >> p.object >> p.location >> l.action >> l.object >>
          l.location)) {
      throw std::runtime_error("malformed intent line in " + path + ": " + line);
    }
    predictions.push_back(p);
    labels.push_back(l);
  }
}

}  // namespace peftlab
