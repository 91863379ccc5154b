// peftlab/tensor.hpp

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

#ifndef PEFTLAB_TENSOR_HPP_
#define PEFTLAB_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace peftlab {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

namespace detail {

// One record on the tape. Values are written once at construction; `grad`
// accumulates across backward passes, `adjoint` is scratch for the pass in
// flight so that repeated backward calls add (never re-propagate) gradients.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adjoint;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backprop;

  std::size_t size() const { return value.size(); }
};

}  // namespace detail

// Dense tensor of doubles, rank <= 3, with reverse-mode autodiff. A Tensor is
// a cheap handle: copies alias the same tape node. All computation is double
// precision and single-threaded per graph; evaluation of finished values is
// safe to share across threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, double fill);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rank-2 accessors; a rank-1 tensor behaves as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double operator()(std::size_t i) const;
  double operator()(std::size_t i, std::size_t j) const;
  double operator()(std::size_t i, std::size_t j, std::size_t k) const;
  double scalar_value() const;

  const std::vector<double> &values() const &;
  // Value copy when called on a temporary, so ranged-for over
  // op(x).values() stays valid.
  std::vector<double> values() &&;
  // In-place mutation of leaf values between graph constructions (optimizer
  // updates, finite differencing). Never mutate a node that already has
  // consumers in a live graph.
  std::vector<double> &raw_values();

  bool requires_grad() const;
  Tensor &set_requires_grad(bool on);
  bool has_grad() const;
  const std::vector<double> &grad() const;
  void zero_grad();

  // Value copy detached from the tape.
  Tensor detached() const;

  detail::Node *node() const { return node_.get(); }
  const std::shared_ptr<detail::Node> &node_ptr() const { return node_; }

  // Builds a tape node for an op with a custom backward rule. `backprop`
  // reads `node.adjoint` and accumulates into the adjoints of parents that
  // require grad. Parents that do not require grad must be skipped.
  static Tensor make_op(Shape shape, std::vector<double> value,
                        const std::vector<Tensor> &parents,
                        std::function<void(detail::Node &)> backprop);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Deterministic random source. Draws are hand-rolled on top of mt19937_64 so
// that sequences do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();   // standard normal (Box-Muller)
  std::uint64_t next_index(std::uint64_t bound);  // [0, bound)

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

Tensor random_uniform(Shape shape, double bound, Rng &rng);
Tensor random_normal(Shape shape, double stddev, Rng &rng);

// A named tensor with a frozen/learnable switch. Frozen parameters receive
// no gradients and no optimizer updates.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor tensor, bool frozen = false);

  const std::string &name() const { return name_; }
  Tensor &tensor() { return tensor_; }
  const Tensor &tensor() const { return tensor_; }
  std::size_t size() const { return tensor_.defined() ? tensor_.size() : 0; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen);

 private:
  std::string name_;
  Tensor tensor_;
  bool frozen_ = false;
};

// ---- Primitives -----------------------------------------------------------

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &x, double c);
// x scaled by a one-element learnable tensor; gradients reach both operands.
Tensor scale_by(const Tensor &x, const Tensor &s);
Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &x);
Tensor softmax_rows(const Tensor &x);
Tensor log_softmax_rows(const Tensor &x);
Tensor layer_norm(const Tensor &x, const Tensor &scale, const Tensor &bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor &x);
Tensor relu(const Tensor &x);
// Valid (no padding) strided temporal convolution. x: [n x c_in], kernel:
// [k x c_in x c_out]; output [n' x c_out] with n' = (n - k) / stride + 1.
Tensor conv1d_temporal(const Tensor &x, const Tensor &kernel,
                       std::size_t stride);
Tensor concat_rows(const Tensor &a, const Tensor &b);
Tensor slice_rows(const Tensor &x, std::size_t from, std::size_t to);
Tensor concat_cols(const Tensor &a, const Tensor &b);
Tensor slice_cols(const Tensor &x, std::size_t from, std::size_t to);
Tensor mean_rows(const Tensor &x);           // [n x d] -> [1 x d]
Tensor sum_all(const Tensor &x);             // -> scalar
Tensor pick(const Tensor &x, std::size_t i, std::size_t j);  // -> scalar
Tensor add_row_broadcast(const Tensor &x, const Tensor &bias);
Tensor reshape(const Tensor &x, Shape shape);
Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b);

// Reverse pass from a scalar loss. Repeated calls accumulate: two identical
// backward passes exactly double every populated gradient.
void backward(const Tensor &loss);

// Compares analytic gradients of f() against central differences for every
// coordinate of every checked tensor that requires grad (frozen parameters
// are skipped). Returns the max of |analytic - numeric| / (|analytic| +
// |numeric| + 1).
double finite_diff_check(const std::function<Tensor()> &f,
                         const std::vector<Tensor> &check, double step);
double finite_diff_check(const std::function<Tensor()> &f, const Tensor &check,
                         double step);

}  // namespace peftlab

#endif  // PEFTLAB_TENSOR_HPP_
