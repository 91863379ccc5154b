// peftlab/tensor.cpp

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

#include "peftlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace peftlab {

std::string shape_to_string(const Shape &shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape &shape) {
  if (shape.empty() || shape.size() > 3) {
    throw std::invalid_argument("tensor rank must be 1..3, got shape " +
                                shape_to_string(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_to_string(shape));
    }
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return constant(std::move(shape), 0.0); }

Tensor Tensor::constant(Shape shape, double fill) {
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->value.assign(shape_numel(shape), fill);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument(
        "value count " + std::to_string(values.size()) +
        " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

const Shape &Tensor::shape() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const {
  if (!node_) return 0;
  return node_->size();
}

std::size_t Tensor::rows() const {
  const Shape &s = shape();
  return s.size() >= 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const Shape &s = shape();
  return s.size() >= 2 ? s[1] : s[0];
}

double Tensor::operator()(std::size_t i) const { return values().at(i); }

double Tensor::operator()(std::size_t i, std::size_t j) const {
  return values().at(i * cols() + j);
}

double Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) const {
  const Shape &s = shape();
  if (s.size() != 3) {
    throw std::logic_error("rank-3 access on tensor of shape " +
                           shape_to_string(s));
  }
  return values().at((i * s[1] + j) * s[2] + k);
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw std::logic_error("scalar_value on tensor of shape " +
                           shape_to_string(shape()));
  }
  return values()[0];
}

const std::vector<double> &Tensor::values() const & {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->value;
}

std::vector<double> Tensor::values() && {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->value;
}

std::vector<double> &Tensor::raw_values() {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor &Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->size();
}

const std::vector<double> &Tensor::grad() const {
  if (!has_grad()) {
    throw std::logic_error("gradient not populated; call backward first");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const {
  return from_values(shape(), values());
}

Tensor Tensor::make_op(Shape shape, std::vector<double> value,
                       const std::vector<Tensor> &parents,
                       std::function<void(detail::Node &)> backprop) {
  check_shape(shape);
  if (value.size() != shape_numel(shape)) {
    throw std::logic_error("op produced " + std::to_string(value.size()) +
                           " values for shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  for (const Tensor &p : parents) {
    if (p.requires_grad()) needs = true;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor &p : parents) node->parents.push_back(p.node_ptr());
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor &loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument(
        "backward requires a scalar loss, got shape " +
        (loss.defined() ? shape_to_string(loss.shape()) : std::string("none")));
  }
  detail::Node *root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order over the requires-grad subgraph.
  std::vector<detail::Node *> order;
  std::unordered_set<detail::Node *> visited;
  std::vector<std::pair<detail::Node *, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      detail::Node *p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (detail::Node *n : order) n->adjoint.assign(n->size(), 0.0);
  root->adjoint[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node *n = *it;
    if (n->backprop) n->backprop(*n);
  }
  for (detail::Node *n : order) {
    if (n->grad.size() != n->size()) n->grad.assign(n->size(), 0.0);
    for (std::size_t i = 0; i < n->size(); ++i) n->grad[i] += n->adjoint[i];
    n->adjoint.clear();
    n->adjoint.shrink_to_fit();
  }
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  double v = uniform();
  double r = std::sqrt(-2.0 * std::log(u));
  double theta = 2.0 * 3.14159265358979323846 * v;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::next_index(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_index bound must be > 0");
  return engine_() % bound;
}

Tensor random_uniform(Shape shape, double bound, Rng &rng) {
  std::vector<double> v(shape_numel(shape));
  for (double &x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(std::move(shape), std::move(v));
}

Tensor random_normal(Shape shape, double stddev, Rng &rng) {
  std::vector<double> v(shape_numel(shape));
  for (double &x : v) x = stddev * rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v));
}

Parameter::Parameter(std::string name, Tensor tensor, bool frozen)
    : name_(std::move(name)), tensor_(std::move(tensor)), frozen_(frozen) {
  tensor_.set_requires_grad(!frozen_);
}

void Parameter::set_frozen(bool frozen) {
  frozen_ = frozen;
  tensor_.set_requires_grad(!frozen);
}

double finite_diff_check(const std::function<Tensor()> &f,
                         const std::vector<Tensor> &check, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite-difference step must be > 0");
  for (const Tensor &t : check) {
    if (t.defined()) const_cast<Tensor &>(t).zero_grad();
  }
  Tensor loss = f();
  if (loss.size() != 1) {
    throw std::invalid_argument("finite_diff_check needs a scalar function");
  }
  backward(loss);

  double worst = 0.0;
  for (const Tensor &t : check) {
    if (!t.defined() || !t.requires_grad()) continue;  // frozen inputs skipped
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) analytic = t.grad();
    auto &vals = const_cast<Tensor &>(t).raw_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const double up = f().scalar_value();
      vals[i] = saved - step;
      const double down = f().scalar_value();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(numeric - analytic[i]) /
                         (std::abs(numeric) + std::abs(analytic[i]) + 1.0);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor()> &f, const Tensor &check,
                         double step) {
  return finite_diff_check(f, std::vector<Tensor>{check}, step);
}

}  // namespace peftlab
