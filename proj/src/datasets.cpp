// peftlab/datasets.cpp

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

#include "peftlab/datasets.hpp"

#include <cmath>
#include <stdexcept>

namespace peftlab {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::size_t uniform_size(Rng &rng, std::size_t lo, std::size_t hi) {
  if (lo > hi) throw std::invalid_argument("invalid range in dataset spec");
  return lo + rng.next_index(hi - lo + 1);
}

}  // namespace

AsrDataset generate_toy_asr(const AsrDatasetSpec &spec) {
  if (spec.vocab < 2) throw std::invalid_argument("toy asr: vocab must be >= 2");
  if (spec.channels == 0 || spec.min_label_length == 0 ||
      spec.min_symbol_duration == 0) {
    throw std::invalid_argument("toy asr: extents must be positive");
  }
  if (spec.min_label_length > spec.max_label_length ||
      spec.min_symbol_duration > spec.max_symbol_duration) {
    throw std::invalid_argument("toy asr: empty range in spec");
  }
  Rng rng(spec.seed);
  std::vector<std::vector<double>> templates(spec.vocab);
  for (auto &t : templates) {
    t.resize(spec.channels);
    for (double &v : t) v = rng.uniform(-1.0, 1.0);
  }
  auto render = [&](std::vector<AsrExample> &out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      AsrExample ex;
      const std::size_t len =
          uniform_size(rng, spec.min_label_length, spec.max_label_length);
      ex.labels.reserve(len);
      std::vector<double> frames;
      for (std::size_t s = 0; s < len; ++s) {
        const int sym = static_cast<int>(rng.next_index(spec.vocab));
        ex.labels.push_back(sym);
        const std::size_t dur =
            uniform_size(rng, spec.min_symbol_duration, spec.max_symbol_duration);
        for (std::size_t f = 0; f < dur; ++f) {
          for (std::size_t c = 0; c < spec.channels; ++c) {
            frames.push_back(templates[sym][c] + spec.noise_sigma * rng.normal());
          }
        }
      }
      const std::size_t total_frames = frames.size() / spec.channels;
      ex.frames = Tensor::from_values({total_frames, spec.channels},
                                      std::move(frames));
      out.push_back(std::move(ex));
    }
  };
  AsrDataset ds;
  ds.spec = spec;
  render(ds.train, spec.train_size);
  render(ds.test, spec.test_size);
  return ds;
}

SpeakerDataset generate_toy_speaker(const SpeakerDatasetSpec &spec) {
  if (spec.speakers < 2) {
    throw std::invalid_argument("toy speaker: speakers must be >= 2");
  }
  if (spec.frames == 0 || spec.channels == 0 || spec.test_per_speaker == 0) {
    throw std::invalid_argument("toy speaker: extents must be positive");
  }
  Rng rng(spec.seed);
  const std::size_t c = spec.channels;
  // Coloring = random mixing with a per-speaker channel-gain profile. The
  // gains spread the per-channel variances a few-fold, so identity lives in
  // frame-level second-order statistics and nowhere in the frame means.
  std::vector<std::vector<double>> coloring(spec.speakers);
  for (auto &m : coloring) {
    m.resize(c * c);
    for (double &v : m) v = rng.uniform(-1.0, 1.0);
    for (std::size_t j = 0; j < c; ++j) {
      const double gain = std::exp(rng.uniform(-0.9, 0.9));
      for (std::size_t i = 0; i < c; ++i) m[i * c + j] *= gain;
    }
  }
  auto render = [&](std::vector<SpeakerUtterance> &out, std::size_t per_speaker) {
    for (std::size_t s = 0; s < spec.speakers; ++s) {
      for (std::size_t u = 0; u < per_speaker; ++u) {
        std::vector<double> frames(spec.frames * c, 0.0);
        for (std::size_t t = 0; t < spec.frames; ++t) {
          std::vector<double> white(c);
          for (double &w : white) w = rng.normal();
          for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < c; ++i) acc += white[i] * coloring[s][i * c + j];
            frames[t * c + j] = acc / std::sqrt(static_cast<double>(c)) +
                                spec.noise_sigma * rng.normal();
          }
        }
        out.push_back(SpeakerUtterance{
            Tensor::from_values({spec.frames, c}, std::move(frames)), s});
      }
    }
  };
  SpeakerDataset ds;
  ds.spec = spec;
  render(ds.train, spec.train_per_speaker);
  render(ds.test, spec.test_per_speaker);

  // Balanced trials over the test split: alternate target and non-target.
  for (std::size_t i = 0; i < spec.trial_count; ++i) {
    SpeakerTrial trial;
    trial.same_speaker = (i % 2 == 0);
    if (trial.same_speaker) {
      const std::size_t s = rng.next_index(spec.speakers);
      const std::size_t a = rng.next_index(spec.test_per_speaker);
      std::size_t b = rng.next_index(spec.test_per_speaker);
      if (spec.test_per_speaker > 1) {
        while (b == a) b = rng.next_index(spec.test_per_speaker);
      }
      trial.enroll_index = s * spec.test_per_speaker + a;
      trial.test_index = s * spec.test_per_speaker + b;
    } else {
      const std::size_t s1 = rng.next_index(spec.speakers);
      std::size_t s2 = rng.next_index(spec.speakers);
      while (s2 == s1) s2 = rng.next_index(spec.speakers);
      trial.enroll_index =
          s1 * spec.test_per_speaker + rng.next_index(spec.test_per_speaker);
      trial.test_index =
          s2 * spec.test_per_speaker + rng.next_index(spec.test_per_speaker);
    }
    ds.trials.push_back(trial);
  }
  return ds;
}

EmotionDataset generate_toy_emotion(const EmotionDatasetSpec &spec) {
  if (spec.classes < 2) throw std::invalid_argument("toy emotion: classes must be >= 2");
  if (spec.frames == 0 || spec.channels == 0 || spec.test_per_class == 0) {
    throw std::invalid_argument("toy emotion: extents must be positive");
  }
  Rng rng(spec.seed);
  auto render = [&](std::vector<LabeledUtterance> &out, std::size_t per_class) {
    for (int cls = 0; cls < spec.classes; ++cls) {
      const double freq = 1.0 + static_cast<double>(cls);
      const double amp = 0.5 + 0.25 * static_cast<double>(cls);
      for (std::size_t u = 0; u < per_class; ++u) {
        std::vector<double> frames(spec.frames * spec.channels);
        std::vector<double> phase(spec.channels);
        for (double &p : phase) p = rng.uniform(0.0, kTwoPi);
        for (std::size_t t = 0; t < spec.frames; ++t) {
          for (std::size_t ch = 0; ch < spec.channels; ++ch) {
            const double arg =
                kTwoPi * freq * static_cast<double>(t) /
                    static_cast<double>(spec.frames) +
                phase[ch];
            frames[t * spec.channels + ch] =
                amp * std::sin(arg) + spec.noise_sigma * rng.normal();
          }
        }
        out.push_back(LabeledUtterance{
            Tensor::from_values({spec.frames, spec.channels}, std::move(frames)),
            cls});
      }
    }
  };
  EmotionDataset ds;
  ds.spec = spec;
  render(ds.train, spec.train_per_class);
  render(ds.test, spec.test_per_class);
  return ds;
}

IntentDataset generate_toy_intent(const IntentDatasetSpec &spec) {
  if (spec.slots.actions < 1 || spec.slots.objects < 1 || spec.slots.locations < 1) {
    throw std::invalid_argument("toy intent: slot counts must be positive");
  }
  if (spec.segment_frames == 0 || spec.channels == 0) {
    throw std::invalid_argument("toy intent: extents must be positive");
  }
  Rng rng(spec.seed);
  auto make_templates = [&](int count) {
    std::vector<std::vector<double>> t(count);
    for (auto &v : t) {
      v.resize(spec.channels);
      for (double &x : v) x = rng.uniform(-1.0, 1.0);
    }
    return t;
  };
  const auto action_t = make_templates(spec.slots.actions);
  const auto object_t = make_templates(spec.slots.objects);
  const auto location_t = make_templates(spec.slots.locations);

  auto render = [&](std::vector<IntentExample> &out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      IntentExample ex;
      ex.label.action = static_cast<int>(rng.next_index(spec.slots.actions));
      ex.label.object = static_cast<int>(rng.next_index(spec.slots.objects));
      ex.label.location = static_cast<int>(rng.next_index(spec.slots.locations));
      std::vector<double> frames;
      frames.reserve(3 * spec.segment_frames * spec.channels);
      for (const auto *tmpl : {&action_t[ex.label.action],
                               &object_t[ex.label.object],
                               &location_t[ex.label.location]}) {
        for (std::size_t f = 0; f < spec.segment_frames; ++f) {
          for (std::size_t ch = 0; ch < spec.channels; ++ch) {
            frames.push_back((*tmpl)[ch] + spec.noise_sigma * rng.normal());
          }
        }
      }
      ex.frames = Tensor::from_values({3 * spec.segment_frames, spec.channels},
                                      std::move(frames));
      out.push_back(std::move(ex));
    }
  };
  IntentDataset ds;
  ds.spec = spec;
  render(ds.train, spec.train_size);
  render(ds.test, spec.test_size);
  return ds;
}

int intent_to_class(const IntentTriple &t, const IntentSlots &slots) {
  return (t.action * slots.objects + t.object) * slots.locations + t.location;
}

IntentTriple class_to_intent(int cls, const IntentSlots &slots) {
  IntentTriple t;
  t.location = cls % slots.locations;
  cls /= slots.locations;
  t.object = cls % slots.objects;
  t.action = cls / slots.objects;
  return t;
}

}  // namespace peftlab
