// tests/test_metrics.cpp

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

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <doctest.h>

#include "oracles.hpp"
#include "peftlab/metrics.hpp"
#include "peftlab/tensor.hpp"

using namespace peftlab;

namespace {

std::vector<std::string> words(std::initializer_list<const char *> items) {
  return {items.begin(), items.end()};
}

SpeakerEmbedding at_angle(double theta) {
  return SpeakerEmbedding{{std::cos(theta), std::sin(theta)}};
}

}  // namespace

TEST_CASE("edit_ops basics") {
  EditOps same = edit_ops(words({"a", "b", "c"}), words({"a", "b", "c"}));
  CHECK(same.total() == 0);
  CHECK(word_error_rate(same) == 0.0);

  EditOps del = edit_ops(words({"a", "b", "c"}), words({"a", "b"}));
  CHECK(del.deletions == 1);
  CHECK(del.substitutions == 0);
  CHECK(del.insertions == 0);
  CHECK(word_error_rate(del) == doctest::Approx(1.0 / 3));

  CHECK_THROWS_AS(edit_ops(std::vector<std::string>{}, words({"a"})),
                  std::invalid_argument);
}

TEST_CASE("edit_ops matches exhaustive alignment enumeration") {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<int> ref(1 + rng.next_index(6)), hyp(rng.next_index(7));
    for (int &w : ref) w = static_cast<int>(rng.next_index(4));
    for (int &w : hyp) w = static_cast<int>(rng.next_index(4));
    const EditOps ops = edit_ops(ref, hyp);
    CHECK(ops.total() == oracles::min_alignment_cost(ref, hyp));
    const auto splits = oracles::optimal_alignment_splits(ref, hyp);
    CHECK(splits.count({ops.substitutions, ops.deletions, ops.insertions}) == 1);
  }
}

TEST_CASE("edit_ops swap symmetry: totals equal, S fixed, D and I exchange") {
  Rng rng(22);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<int> ref(1 + rng.next_index(6)), hyp(1 + rng.next_index(6));
    for (int &w : ref) w = static_cast<int>(rng.next_index(3));
    for (int &w : hyp) w = static_cast<int>(rng.next_index(3));
    const EditOps fwd = edit_ops(ref, hyp);
    const EditOps rev = edit_ops(hyp, ref);
    CHECK(fwd.total() == rev.total());
    CHECK(fwd.substitutions == rev.substitutions);
    CHECK(fwd.deletions == rev.insertions);
    CHECK(fwd.insertions == rev.deletions);
  }
}

TEST_CASE("word error rate conventions") {
  EditOps ops;
  ops.substitutions = 1;
  ops.deletions = 1;
  ops.insertions = 1;
  ops.reference_length = 10;
  CHECK(word_error_rate(ops) == doctest::Approx(0.3));

  // Hypothesis much longer than the reference: WER above 1 is fine.
  EditOps grow = edit_ops(words({"a"}), words({"a", "b", "c"}));
  CHECK(word_error_rate(grow) == doctest::Approx(2.0));

  // Corpus aggregation sums counts before dividing.
  EditOps a = edit_ops(words({"a", "b"}), words({"a"}));
  EditOps b = edit_ops(words({"x"}), words({"x"}));
  EditOps corpus = accumulate(a, b);
  CHECK(word_error_rate(corpus) == doctest::Approx(1.0 / 3));
}

TEST_CASE("cosine score basics") {
  SpeakerEmbedding x{{1.0, 2.0, 3.0}};
  CHECK(cosine_score(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  SpeakerEmbedding a{{1.0, 0.0}}, b{{0.0, 2.0}}, c{{-3.0, 0.0}};
  CHECK(cosine_score(a, b) == doctest::Approx(0.0));
  CHECK(cosine_score(a, c) == doctest::Approx(-1.0));
  SpeakerEmbedding zero{{0.0, 0.0}};
  CHECK_THROWS_AS(cosine_score(a, zero), std::invalid_argument);
}

TEST_CASE("adaptive s-norm centers symmetric cohorts to zero") {
  // enroll at angle 0, test at theta; cohort symmetric about theta/2 with
  // gamma chosen so the cohort mean equals the raw score.
  const double theta = 3.14159265358979323846 / 3.0;
  const double raw = std::cos(theta);
  const double gamma = std::acos(std::cos(theta) / std::cos(theta / 2.0));
  SpeakerEmbedding enroll = at_angle(0.0), test = at_angle(theta);
  Cohort cohort;
  cohort.embeddings = {at_angle(theta / 2.0 + gamma), at_angle(theta / 2.0 - gamma)};
  cohort.top_k = 2;
  CHECK(adaptive_s_norm(raw, enroll, test, cohort) ==
        doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("adaptive s-norm recomputation oracle and top_k collapse") {
  Rng rng(23);
  Cohort cohort;
  for (int i = 0; i < 6; ++i) {
    cohort.embeddings.push_back(
        SpeakerEmbedding{{rng.normal(), rng.normal(), rng.normal()}});
  }
  cohort.top_k = 6;  // full cohort: plain s-norm
  SpeakerEmbedding enroll{{rng.normal(), rng.normal(), rng.normal()}};
  SpeakerEmbedding test{{rng.normal(), rng.normal(), rng.normal()}};
  const double raw = cosine_score(enroll, test);

  auto stats = [&](const SpeakerEmbedding &side) {
    std::vector<double> scores;
    for (const auto &e : cohort.embeddings) scores.push_back(cosine_score(side, e));
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  const auto [me, se] = stats(enroll);
  const auto [mt, st] = stats(test);
  const double expect = 0.5 * ((raw - me) / se + (raw - mt) / st);
  CHECK(adaptive_s_norm(raw, enroll, test, cohort) ==
        doctest::Approx(expect).epsilon(1e-12));

  // An identical affine shift of raw and cohort scores cancels in the
  // formula, so the induced ranking cannot move.
  const double shift = 0.37;
  const double shifted = 0.5 * (((raw + shift) - (me + shift)) / se +
                                ((raw + shift) - (mt + shift)) / st);
  CHECK(shifted == doctest::Approx(expect).epsilon(1e-12));

  Cohort small = cohort;
  small.top_k = 1;
  CHECK_THROWS_AS(adaptive_s_norm(raw, enroll, test, small), std::invalid_argument);
  small.top_k = 7;
  CHECK_THROWS_AS(adaptive_s_norm(raw, enroll, test, small), std::invalid_argument);
}

TEST_CASE("equal error rate worked examples") {
  CHECK(equal_error_rate({{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}}) ==
        doctest::Approx(0.0));
  CHECK(equal_error_rate({{0.9, false}, {0.8, false}, {0.2, true}, {0.1, true}}) ==
        doctest::Approx(1.0));
  CHECK(equal_error_rate({{0.9, true}, {0.2, true}, {0.8, false}, {0.1, false}}) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(equal_error_rate({{0.5, true}}), std::invalid_argument);
}

TEST_CASE("equal error rate: oracle sweep and monotone-transform invariance") {
  Rng rng(24);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ScoredTrial> trials;
    std::vector<std::pair<double, bool>> pairs;
    const std::size_t pos = 1 + rng.next_index(8);
    const std::size_t neg = 1 + rng.next_index(8);
    for (std::size_t i = 0; i < pos + neg; ++i) {
      const double score = rng.uniform(-1.0, 1.0);
      const bool target = i < pos;
      trials.push_back({score, target});
      pairs.emplace_back(score, target);
    }
    const double eer = equal_error_rate(trials);
    CHECK(eer >= 0.0);
    CHECK(eer <= 1.0);
    CHECK(eer == doctest::Approx(oracles::eer_by_sweep(pairs)).epsilon(1e-12));

    std::vector<ScoredTrial> warped = trials;
    for (auto &t : warped) t.score = std::exp(2.0 * t.score) + 1.0;
    CHECK(equal_error_rate(warped) == doctest::Approx(eer).epsilon(1e-12));
  }
}

TEST_CASE("printed FAR convention is available behind a flag") {
  const std::vector<ScoredTrial> trials{
      {0.9, true}, {0.7, false}, {0.5, true}, {0.3, false}, {0.2, true}};
  const double standard = equal_error_rate(trials, FarConvention::kNegatives);
  const double printed = equal_error_rate(trials, FarConvention::kPrintedFpTp);
  CHECK(standard != printed);
}

TEST_CASE("emotion error rate is macro averaged") {
  std::vector<int> labels{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  std::vector<int> preds{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(emotion_error_rate(preds, labels, 2) == doctest::Approx(0.5));
  CHECK(emotion_error_rate({0, 1, 2}, {0, 1, 2}, 3) == 0.0);
  CHECK_THROWS_WITH_AS(emotion_error_rate({0, 0}, {0, 0}, 2),
                       doctest::Contains("absent"), std::invalid_argument);

  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 2 + static_cast<int>(rng.next_index(4));
    std::vector<int> l, p;
    for (int c = 0; c < classes; ++c) l.push_back(c);  // every class present
    for (int i = 0; i < 30; ++i) l.push_back(static_cast<int>(rng.next_index(classes)));
    for (std::size_t i = 0; i < l.size(); ++i) {
      p.push_back(static_cast<int>(rng.next_index(classes)));
    }
    CHECK(emotion_error_rate(p, l, classes) ==
          doctest::Approx(oracles::macro_error_by_confusion(p, l, classes))
              .epsilon(1e-13));
  }
}

TEST_CASE("intent error rate is exact-match over triples") {
  std::vector<IntentTriple> labels{{1, 2, 3}, {0, 5, 1}};
  std::vector<IntentTriple> right = labels;
  CHECK(intent_error_rate(right, labels) == 0.0);
  std::vector<IntentTriple> one_slot{{1, 2, 2}, {0, 5, 1}};
  CHECK(intent_error_rate(one_slot, labels) == doctest::Approx(0.5));

  // recount with explicit boolean-and
  Rng rng(26);
  IntentSlots slots;
  std::vector<IntentTriple> p, l;
  for (int i = 0; i < 40; ++i) {
    l.push_back({static_cast<int>(rng.next_index(slots.actions)),
                 static_cast<int>(rng.next_index(slots.objects)),
                 static_cast<int>(rng.next_index(slots.locations))});
    p.push_back({static_cast<int>(rng.next_index(slots.actions)),
                 static_cast<int>(rng.next_index(slots.objects)),
                 static_cast<int>(rng.next_index(slots.locations))});
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const bool ok = p[i].action == l[i].action && p[i].object == l[i].object &&
                    p[i].location == l[i].location;
    if (ok) ++hits;
  }
  CHECK(intent_error_rate(p, l) ==
        doctest::Approx(1.0 - double(hits) / double(l.size())));

  std::vector<IntentTriple> bad{{6, 0, 0}, {0, 0, 0}};
  CHECK_THROWS_AS(intent_error_rate(bad, labels), std::invalid_argument);
}

TEST_CASE("interchange files round trip") {
  const std::string trial_path = "metrics_trials_test.txt";
  std::vector<TrialRecord> records{{true, 0.91234567890123, -0.25},
                                   {false, -0.5, 1.75}};
  write_trial_scores(trial_path, records);
  const auto back = read_trial_scores(trial_path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].target == true);
  CHECK(back[0].raw == records[0].raw);
  CHECK(back[1].normalized == records[1].normalized);
  std::remove(trial_path.c_str());

  const std::string pred_path = "metrics_preds_test.txt";
  write_class_predictions(pred_path, {1, 2, 0}, {1, 1, 0});
  std::vector<int> p, l;
  read_class_predictions(pred_path, p, l);
  CHECK(p == std::vector<int>{1, 2, 0});
  CHECK(l == std::vector<int>{1, 1, 0});
  std::remove(pred_path.c_str());

  const std::string intent_path = "metrics_intent_test.txt";
  std::vector<IntentTriple> ip{{1, 2, 3}}, il{{1, 2, 2}};
  write_intent_predictions(intent_path, ip, il);
  std::vector<IntentTriple> rp, rl;
  read_intent_predictions(intent_path, rp, rl);
  CHECK(rp == ip);
  CHECK(rl == il);
  std::remove(intent_path.c_str());
}
