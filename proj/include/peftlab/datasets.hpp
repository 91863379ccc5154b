// peftlab/datasets.hpp

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

#ifndef PEFTLAB_DATASETS_HPP_
#define PEFTLAB_DATASETS_HPP_

#include <cstdint>
#include <vector>

#include "peftlab/metrics.hpp"
#include "peftlab/tensor.hpp"

namespace peftlab {

// Synthetic stand-ins for the four task families. Generators are pure
// functions of their spec: the same seed yields a byte-identical dataset.

// Each vocabulary symbol owns a fixed channel template; an utterance renders
// its label sequence as template frames of random duration plus noise. The
// alignment is discarded.
struct AsrDatasetSpec {
  std::size_t vocab = 5;
  std::size_t channels = 8;
  std::size_t train_size = 64;
  std::size_t test_size = 24;
  std::size_t min_label_length = 2;
  std::size_t max_label_length = 4;
  std::size_t min_symbol_duration = 2;
  std::size_t max_symbol_duration = 4;
  double noise_sigma = 0.1;
  std::uint64_t seed = 11;
};

struct AsrExample {
  Tensor frames;            // [T x channels]
  std::vector<int> labels;  // in [0, vocab)
};

struct AsrDataset {
  AsrDatasetSpec spec;
  std::vector<AsrExample> train, test;
};

AsrDataset generate_toy_asr(const AsrDatasetSpec &spec);

// Speaker identity is a fixed random channel coloring applied to white noise,
// so it lives in frame-level second-order statistics rather than in the frame
// means. Trials are balanced same/different pairs over the test split.
struct SpeakerDatasetSpec {
  std::size_t speakers = 8;
  std::size_t train_per_speaker = 6;
  std::size_t test_per_speaker = 3;
  std::size_t frames = 40;
  std::size_t channels = 8;
  double noise_sigma = 0.05;
  std::size_t trial_count = 60;
  std::uint64_t seed = 12;
};

struct SpeakerUtterance {
  Tensor frames;
  std::size_t speaker = 0;
};

struct SpeakerTrial {
  std::size_t enroll_index = 0;  // into test
  std::size_t test_index = 0;    // into test
  bool same_speaker = false;
};

struct SpeakerDataset {
  SpeakerDatasetSpec spec;
  std::vector<SpeakerUtterance> train, test;
  std::vector<SpeakerTrial> trials;
};

SpeakerDataset generate_toy_speaker(const SpeakerDatasetSpec &spec);

// Emotion classes differ in oscillation frequency and amplitude.
struct EmotionDatasetSpec {
  int classes = 4;
  std::size_t train_per_class = 8;
  std::size_t test_per_class = 4;
  std::size_t frames = 40;
  std::size_t channels = 8;
  double noise_sigma = 0.1;
  std::uint64_t seed = 13;
};

struct LabeledUtterance {
  Tensor frames;
  int label = 0;
};

struct EmotionDataset {
  EmotionDatasetSpec spec;
  std::vector<LabeledUtterance> train, test;
};

EmotionDataset generate_toy_emotion(const EmotionDatasetSpec &spec);

// Compositional triples: the utterance is three consecutive segments, one per
// slot, each rendered from that slot class's template, so the slots are
// independently recoverable.
struct IntentDatasetSpec {
  IntentSlots slots;
  std::size_t train_size = 96;
  std::size_t test_size = 36;
  std::size_t segment_frames = 12;
  std::size_t channels = 8;
  double noise_sigma = 0.1;
  std::uint64_t seed = 14;
};

struct IntentExample {
  Tensor frames;
  IntentTriple label;
};

struct IntentDataset {
  IntentDatasetSpec spec;
  std::vector<IntentExample> train, test;
};

IntentDataset generate_toy_intent(const IntentDatasetSpec &spec);

// Joint-class encoding for training a single classification head over
// intent triples.
int intent_to_class(const IntentTriple &t, const IntentSlots &slots);
IntentTriple class_to_intent(int cls, const IntentSlots &slots);

}  // namespace peftlab

#endif  // PEFTLAB_DATASETS_HPP_
