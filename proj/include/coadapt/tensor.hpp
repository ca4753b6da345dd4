// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with tape-based reverse-mode differentiation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coadapt {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised whenever an operation would produce NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Handle to shared tensor storage. Copies alias the same buffer, so a
/// parameter captured by the tape and by its owning model is one object.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// In-place access for parameter updates performed between steps.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; all zeros when no backward pass has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  /// Fresh leaf holding a copy of the values, detached from any tape.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape shape, std::vector<double> data);

  std::shared_ptr<detail::TensorImpl> impl_;
};

Tensor make_result(Shape shape, std::vector<double> data);

/// Ordered log of differentiable operations. Recording order is a valid
/// topological order, so backward replays it in reverse exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Makes `tape` the recording target for the current thread while alive.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
              std::shared_ptr<detail::TensorImpl> output, BackwardFn fn);

  /// Accumulates dLoss/dLeaf into every requires-grad leaf reachable from
  /// `loss`. A loss that never touched the tape leaves all grads at zero.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

/// Suspends recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

// Elementwise. Binary ops accept equal shapes or a one-element operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Linear algebra and layout.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Rows of `table` selected by index, stacked into [indices.size() x cols].
Tensor take_rows(const Tensor& table, std::span<const std::size_t> indices);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
/// x[d x n] + bias[d x 1] broadcast over columns.
Tensor add_columnwise(const Tensor& x, const Tensor& bias);

// Reductions and normalization.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// Normalizes every column of a [features x tokens] matrix to zero mean and
/// unit variance (no affine part).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

// Spatial ops on [H, W, C] feature maps.
/// 3x3 kernel [3, 3, Cin, Cout], zero padding 1, stride 1 or 2.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride);
/// Nearest-neighbour 2x upsampling.
Tensor upsample2x(const Tensor& x);

/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|) over the probed
/// coordinates of `param`, using central differences with step `h`. `f` must
/// rebuild the scalar from scratch on every call; `param` is perturbed in
/// place and restored.
double grad_check(const std::function<Tensor()>& f, Tensor param, double h,
                  std::span<const std::size_t> coords);
double grad_check(const std::function<Tensor()>& f, Tensor param, double h);
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

double l2_norm(std::span<const double> values);
std::uint32_t checksum(std::span<const Tensor> tensors);

}  // namespace coadapt
