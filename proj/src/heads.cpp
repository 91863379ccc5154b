// peftlab/heads.cpp

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

#include "peftlab/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace peftlab {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

Parameter head_weight(const std::string &name, std::size_t in, std::size_t out,
                      Rng &rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return Parameter(name, random_uniform({in, out}, bound, rng));
}

}  // namespace

Tensor apply_activation(Activation act, const Tensor &x) {
  return act == Activation::kRelu ? relu(x) : gelu(x);
}

AsrHead::AsrHead(std::size_t input_dim, std::size_t vocab, Rng &rng)
    : input_dim_(input_dim),
      vocab_(vocab),
      w_(head_weight("head.fc.weight", input_dim, vocab + 1, rng)),
      b_(Parameter("head.fc.bias", Tensor::zeros({vocab + 1}))) {
  if (vocab == 0) throw std::invalid_argument("asr head: vocab must be >= 1");
}

Tensor AsrHead::forward(const Tensor &features) const {
  if (features.rank() != 2 || features.cols() != input_dim_) {
    throw std::invalid_argument("asr head: expected [n x " +
                                std::to_string(input_dim_) + "] features, got " +
                                shape_to_string(features.shape()));
  }
  return linear(features, w_.tensor(), b_.tensor());
}

void AsrHead::collect_parameters(std::vector<Parameter *> &out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

ClsHead::ClsHead(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                 Activation act, Rng &rng)
    : input_dim_(input_dim),
      hidden_(hidden),
      classes_(classes),
      act_(act),
      w1_(head_weight("head.fc1.weight", input_dim, hidden, rng)),
      b1_(Parameter("head.fc1.bias", Tensor::zeros({hidden}))),
      w2_(head_weight("head.fc2.weight", hidden, classes, rng)),
      b2_(Parameter("head.fc2.bias", Tensor::zeros({classes}))) {
  if (hidden == 0 || classes == 0) {
    throw std::invalid_argument("cls head: hidden and classes must be >= 1");
  }
}

Tensor ClsHead::embedding(const Tensor &features) const {
  if (features.rank() != 2 || features.cols() != input_dim_) {
    throw std::invalid_argument("cls head: expected [n x " +
                                std::to_string(input_dim_) + "] features, got " +
                                shape_to_string(features.shape()));
  }
  Tensor h = apply_activation(act_, linear(features, w1_.tensor(), b1_.tensor()));
  return mean_rows(h);
}

Tensor ClsHead::forward(const Tensor &features) const {
  return linear(embedding(features), w2_.tensor(), b2_.tensor());
}

void ClsHead::collect_parameters(std::vector<Parameter *> &out) {
  out.push_back(&w1_);
  out.push_back(&b1_);
  out.push_back(&w2_);
  out.push_back(&b2_);
}

std::size_t ctc_min_frames(const std::vector<int> &target) {
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  return target.size() + repeats;
}

// Forward-backward in log space over the blank-augmented label sequence
// l' = (blank, y_1, blank, y_2, ..., blank). Both alpha and beta include the
// emission at their own frame, so paths through state s at frame t sum to
// alpha + beta - logp(t, l'_s).
Tensor ctc_loss(const Tensor &log_probs, const std::vector<int> &target,
                int blank) {
  if (log_probs.rank() != 2) {
    throw std::invalid_argument("ctc_loss: log_probs must be [n x symbols], got " +
                                shape_to_string(log_probs.shape()));
  }
  const std::size_t n = log_probs.rows();
  const std::size_t symbols = log_probs.cols();
  if (blank < 0 || static_cast<std::size_t>(blank) >= symbols) {
    throw std::invalid_argument("ctc_loss: blank index " + std::to_string(blank) +
                                " outside of " + std::to_string(symbols) +
                                " symbols");
  }
  for (int label : target) {
    if (label < 0 || static_cast<std::size_t>(label) >= symbols || label == blank) {
      throw std::invalid_argument("ctc_loss: label " + std::to_string(label) +
                                  " invalid for " + std::to_string(symbols) +
                                  " symbols with blank " + std::to_string(blank));
    }
  }
  if (n < ctc_min_frames(target)) {
    throw std::invalid_argument(
        "ctc_loss: infeasible alignment, target needs at least " +
        std::to_string(ctc_min_frames(target)) + " frames but got " +
        std::to_string(n));
  }

  const std::size_t states = 2 * target.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

  const auto &lp = log_probs.values();
  auto lp_at = [&](std::size_t t, int sym) {
    return lp[t * symbols + static_cast<std::size_t>(sym)];
  };
  auto skip_allowed = [&](std::size_t s) {
    // Entering state s from s-2: allowed unless s is blank or repeats s-2.
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  std::vector<double> alpha(n * states, kLogZero);
  alpha[0] = lp_at(0, ext[0]);
  if (states > 1) alpha[1] = lp_at(0, ext[1]);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = alpha[(t - 1) * states + s];
      if (s >= 1) acc = log_add(acc, alpha[(t - 1) * states + s - 1]);
      if (skip_allowed(s)) acc = log_add(acc, alpha[(t - 1) * states + s - 2]);
      alpha[t * states + s] =
          acc == kLogZero ? kLogZero : acc + lp_at(t, ext[s]);
    }
  }
  double log_total = alpha[(n - 1) * states + states - 1];
  if (states > 1)
    log_total = log_add(log_total, alpha[(n - 1) * states + states - 2]);
  if (!(log_total > kLogZero)) {
    throw std::invalid_argument("ctc_loss: no feasible alignment path");
  }

  return Tensor::make_op(
      {1}, {-log_total},
      {log_probs},
      [n, symbols, states, blank, ext = std::move(ext), alpha = std::move(alpha),
       log_total](detail::Node &self) {
        detail::Node *lpn = self.parents[0].get();
        if (!lpn->requires_grad) return;
        const auto &lp = lpn->value;
        auto lp_at = [&](std::size_t t, int sym) {
          return lp[t * symbols + static_cast<std::size_t>(sym)];
        };
        auto skip_allowed = [&](std::size_t s) {
          return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
        };
        std::vector<double> beta(n * states, kLogZero);
        beta[(n - 1) * states + states - 1] = lp_at(n - 1, ext[states - 1]);
        if (states > 1)
          beta[(n - 1) * states + states - 2] = lp_at(n - 1, ext[states - 2]);
        for (std::size_t t = n - 1; t-- > 0;) {
          for (std::size_t s = 0; s < states; ++s) {
            double acc = beta[(t + 1) * states + s];
            if (s + 1 < states) acc = log_add(acc, beta[(t + 1) * states + s + 1]);
            if (s + 2 < states && skip_allowed(s + 2))
              acc = log_add(acc, beta[(t + 1) * states + s + 2]);
            beta[t * states + s] =
                acc == kLogZero ? kLogZero : acc + lp_at(t, ext[s]);
          }
        }
        const double upstream = self.adjoint[0];
        for (std::size_t t = 0; t < n; ++t) {
          // d(-logP)/d lp(t,k) = -exp(lse_{s: l'_s = k}(alpha+beta) - lp - logP)
          std::vector<double> acc(symbols, kLogZero);
          for (std::size_t s = 0; s < states; ++s) {
            const double ab = alpha[t * states + s] + beta[t * states + s];
            if (ab == kLogZero) continue;
            auto k = static_cast<std::size_t>(ext[s]);
            acc[k] = log_add(acc[k], ab);
          }
          for (std::size_t k = 0; k < symbols; ++k) {
            if (acc[k] == kLogZero) continue;
            const double g =
                -std::exp(acc[k] - lp[t * symbols + k] - log_total);
            lpn->adjoint[t * symbols + k] += upstream * g;
          }
        }
      });
}

Tensor cross_entropy_loss(const Tensor &logits, std::size_t label) {
  Tensor row = logits;
  if (logits.rank() == 1) row = reshape(logits, {1, logits.size()});
  if (row.rank() != 2 || row.rows() != 1) {
    throw std::invalid_argument("cross_entropy_loss: expected a logit vector, got " +
                                shape_to_string(logits.shape()));
  }
  if (label >= row.cols()) {
    throw std::invalid_argument("cross_entropy_loss: label " +
                                std::to_string(label) + " out of range for " +
                                std::to_string(row.cols()) + " classes");
  }
  return scale(pick(log_softmax_rows(row), 0, label), -1.0);
}

std::vector<int> ctc_greedy_decode(const Tensor &frame_logits, int blank) {
  if (frame_logits.rank() != 2) {
    throw std::invalid_argument("ctc_greedy_decode: expected [n x symbols]");
  }
  const std::size_t n = frame_logits.rows(), m = frame_logits.cols();
  const auto &v = frame_logits.values();
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < n; ++t) {
    const double *row = v.data() + t * m;
    int best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace peftlab
