// peftlab/heads.hpp

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

#ifndef PEFTLAB_HEADS_HPP_
#define PEFTLAB_HEADS_HPP_

#include <cstddef>
#include <vector>

#include "peftlab/tensor.hpp"

namespace peftlab {

enum class Activation { kRelu, kGelu };

Tensor apply_activation(Activation act, const Tensor &x);

// Per-frame linear head for CTC training. Emits vocab+1 logits per frame;
// the blank symbol sits at the last index.
class AsrHead {
 public:
  AsrHead(std::size_t input_dim, std::size_t vocab, Rng &rng);

  Tensor forward(const Tensor &features) const;  // [n x (vocab+1)]
  std::size_t vocab() const { return vocab_; }
  int blank_index() const { return static_cast<int>(vocab_); }
  std::size_t input_dim() const { return input_dim_; }
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  std::size_t input_dim_, vocab_;
  Parameter w_, b_;
};

// Classification head: FC, activation, average time pooling, FC. The pooled
// activation doubles as the utterance embedding for verification.
class ClsHead {
 public:
  ClsHead(std::size_t input_dim, std::size_t hidden, std::size_t classes,
          Activation act, Rng &rng);

  Tensor forward(const Tensor &features) const;    // [1 x classes]
  Tensor embedding(const Tensor &features) const;  // [1 x hidden]
  std::size_t classes() const { return classes_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t input_dim() const { return input_dim_; }
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  std::size_t input_dim_, hidden_, classes_;
  Activation act_;
  Parameter w1_, b1_, w2_, b2_;
};

// Frames needed for a CTC alignment of `target` to exist: one per label plus
// a separating blank per adjacent repeat.
std::size_t ctc_min_frames(const std::vector<int> &target);

// Negative log probability of all alignments of `target` given per-frame
// log probabilities [n x (V+1)], computed with the forward algorithm in log
// space. Differentiable with respect to log_probs.
Tensor ctc_loss(const Tensor &log_probs, const std::vector<int> &target,
                int blank);

// -log softmax(logits)[label] for a [1 x C] or [C] logit vector.
Tensor cross_entropy_loss(const Tensor &logits, std::size_t label);

// Best-path decoding: per-frame argmax, collapse repeats, drop blanks.
std::vector<int> ctc_greedy_decode(const Tensor &frame_logits, int blank);

}  // namespace peftlab

#endif  // PEFTLAB_HEADS_HPP_
