// peftlab/optim.hpp

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

#ifndef PEFTLAB_OPTIM_HPP_
#define PEFTLAB_OPTIM_HPP_

#include <cstddef>
#include <vector>

#include "peftlab/tensor.hpp"

namespace peftlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Moment state exists only for the
// non-frozen parameters handed in at construction; frozen parameters are
// never touched.
class Adam {
 public:
  explicit Adam(const std::vector<Parameter *> &params, AdamConfig cfg = {});

  void step(double lr);
  void zero_grad();
  std::size_t step_count() const { return steps_; }

 private:
  std::vector<Parameter *> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::size_t steps_ = 0;
};

// Learning-rate schedules: piecewise-linear warmup to eta_max and back to
// eta_0, or staircase decay eta_0 * gamma^floor(t / s).
struct LrSchedule {
  enum class Kind { kWarmupLinear, kStep };

  Kind kind = Kind::kWarmupLinear;
  double initial_lr = 1e-7;
  double max_lr = 1e-4;
  std::size_t warmup_steps = 5000;
  std::size_t total_steps = 34600;
  double gamma = 0.1;
  std::size_t step_size = 10;

  static LrSchedule warmup_linear(double eta0, double eta_max,
                                  std::size_t n_warm, std::size_t n_total);
  static LrSchedule step_decay(double eta0, double gamma, std::size_t s);
};

double lr_at(const LrSchedule &schedule, std::size_t t);

}  // namespace peftlab

#endif  // PEFTLAB_OPTIM_HPP_
