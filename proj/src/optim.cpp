// peftlab/optim.cpp

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

#include "peftlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace peftlab {

Adam::Adam(const std::vector<Parameter *> &params, AdamConfig cfg) : cfg_(cfg) {
  for (Parameter *p : params) {
    if (p->frozen()) continue;
    params_.push_back(p);
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter *p = params_[i];
    if (!p->tensor().has_grad()) continue;  // no flow this step: moments stay
    const auto &g = p->tensor().grad();
    auto &value = p->tensor().raw_values();
    auto &m = m_[i];
    auto &v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter *p : params_) p->tensor().zero_grad();
}

LrSchedule LrSchedule::warmup_linear(double eta0, double eta_max,
                                     std::size_t n_warm, std::size_t n_total) {
  if (n_warm == 0 || n_total <= n_warm) {
    throw std::invalid_argument("warmup schedule needs 0 < N_warm < N_total");
  }
  LrSchedule s;
  s.kind = Kind::kWarmupLinear;
  s.initial_lr = eta0;
  s.max_lr = eta_max;
  s.warmup_steps = n_warm;
  s.total_steps = n_total;
  return s;
}

LrSchedule LrSchedule::step_decay(double eta0, double gamma, std::size_t step) {
  if (step == 0) throw std::invalid_argument("step schedule needs s >= 1");
  LrSchedule s;
  s.kind = Kind::kStep;
  s.initial_lr = eta0;
  s.gamma = gamma;
  s.step_size = step;
  return s;
}

double lr_at(const LrSchedule &schedule, std::size_t t) {
  if (schedule.kind == LrSchedule::Kind::kStep) {
    const double e = static_cast<double>(t / schedule.step_size);
    return schedule.initial_lr * std::pow(schedule.gamma, e);
  }
  if (t > schedule.total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(t) +
                                " beyond N_total " +
                                std::to_string(schedule.total_steps));
  }
  const double eta0 = schedule.initial_lr, eta_max = schedule.max_lr;
  if (t <= schedule.warmup_steps) {
    return eta0 + (static_cast<double>(t) /
                   static_cast<double>(schedule.warmup_steps)) *
                      (eta_max - eta0);
  }
  return eta_max - (static_cast<double>(t - schedule.warmup_steps) /
                    static_cast<double>(schedule.total_steps -
                                        schedule.warmup_steps)) *
                       (eta_max - eta0);
}

}  // namespace peftlab
