// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/tensor.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace coadapt {

namespace {

using detail::TensorImpl;

thread_local Tape* g_active_tape = nullptr;

void require_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value");
  }
}

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* in : inputs) {
    if (in->requires_grad()) return tape;
  }
  return nullptr;
}

// Wraps a computed buffer as an op result, attaching a backward rule when any
// input is being tracked. `make_backward(out)` must return the rule.
template <class MakeBackward>
Tensor finish(const char* op, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
  require_finite(op, data);
  Tensor out = make_result(std::move(shape), std::move(data));
  if (Tape* tape = recording_tape(inputs)) {
    TensorImpl* raw = out.impl().get();
    raw->requires_grad = true;
    raw->is_leaf = false;
    std::vector<std::shared_ptr<TensorImpl>> keep;
    keep.reserve(inputs.size());
    for (const Tensor* in : inputs) keep.push_back(in->impl());
    tape->record(std::move(keep), out.impl(), make_backward(raw));
  }
  return out;
}

// Gradient sink for an input; null when the input is not tracked.
double* sink(TensorImpl* t) {
  if (!t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

enum class Broadcast { kSame, kScalarRhs, kScalarLhs };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalarRhs;
  if (a.numel() == 1) return Broadcast::kScalarLhs;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

// Shared driver for binary elementwise ops. `fwd(x, y)` computes the value,
// `dx(x, y, out)` and `dy(x, y, out)` the local partials.
template <class Fwd, class Dx, class Dy>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Dx dx, Dy dy) {
  const Broadcast kind = broadcast_kind(op, a, b);
  const Shape shape = kind == Broadcast::kScalarLhs ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data();
  const auto bd = b.data();
  auto ai = [&](std::size_t i) { return kind == Broadcast::kScalarLhs ? ad[0] : ad[i]; };
  auto bi = [&](std::size_t i) { return kind == Broadcast::kScalarRhs ? bd[0] : bd[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ai(i), bi(i));
  return finish(op, shape, std::move(out), {&a, &b}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    TensorImpl* pb = b.impl().get();
    return [=] {
      double* ga = sink(pa);
      double* gb = sink(pb);
      const std::size_t m = o->data.size();
      for (std::size_t i = 0; i < m; ++i) {
        const double x = kind == Broadcast::kScalarLhs ? pa->data[0] : pa->data[i];
        const double y = kind == Broadcast::kScalarRhs ? pb->data[0] : pb->data[i];
        const double g = o->grad[i];
        if (ga != nullptr) ga[kind == Broadcast::kScalarLhs ? 0 : i] += g * dx(x, y, o->data[i]);
        if (gb != nullptr) gb[kind == Broadcast::kScalarRhs ? 0 : i] += g * dy(x, y, o->data[i]);
      }
    };
  });
}

template <class Fwd, class Dx>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Dx dx) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  return finish(op, a.shape(), std::move(out), {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      for (std::size_t i = 0; i < o->data.size(); ++i) ga[i] += o->grad[i] * dx(pa->data[i], o->data[i]);
    };
  });
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  require_finite("tensor", data);
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor make_result(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("tensor: axis out of range for " + to_string(shape()));
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + to_string(shape()) + " is not a scalar");
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return make_result(impl_->shape, impl_->data); }

// ---------------------------------------------------------------------------
// Tape

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

NoGradGuard::NoGradGuard() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
                  BackwardFn fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  // Intermediate buffers restart from zero so that repeated calls only
  // accumulate into leaves.
  for (Node& node : nodes_) {
    node.output->ensure_grad();
    std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0);
  }
  TensorImpl* root = loss.impl().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

void Tape::clear() { nodes_.clear(); }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      "log_sigmoid", a,
      [](double x) { return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x)); },
      [](double x, double) {
        // d/dx log sigma(x) = sigma(-x)
        if (x >= 0.0) {
          const double e = std::exp(-x);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(x));
      });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return finish("matmul", {m, n}, std::move(out), {&a, &b}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    TensorImpl* pb = b.impl().get();
    return [=] {
      const double* g = o->grad.data();
      if (double* ga = sink(pa)) {
        // dA = dOut * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = pb->data.data() + p * n;
            const double* grow = g + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (double* gb = sink(pb)) {
        // dB = A^T * dOut
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = pa->data[i * k + p];
            if (av == 0.0) continue;
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    };
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto ad = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  return finish("transpose", {c, r}, std::move(out), {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o->grad[j * r + i];
    };
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return finish("reshape", std::move(shape), std::move(out), {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i];
    };
  });
}

Tensor take_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank("take_rows", table, 2);
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * cols);
  const auto td = table.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) throw ShapeError("take_rows: index out of range");
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(idx[r] * cols), cols, out.begin() + r * cols);
  }
  return finish("take_rows", {idx.size(), cols}, std::move(out), {&table}, [=](TensorImpl* o) {
    TensorImpl* pt = table.impl().get();
    return [=] {
      double* gt = sink(pt);
      if (gt == nullptr) return;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) gt[idx[r] * cols + c] += o->grad[r * cols + c];
    };
  });
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_rank("concat_rows", top, 2);
  require_rank("concat_rows", bottom, 2);
  if (top.dim(1) != bottom.dim(1)) throw ShapeError("concat_rows: column counts differ");
  const std::size_t split = top.numel();
  std::vector<double> out(top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  return finish("concat_rows", {top.dim(0) + bottom.dim(0), top.dim(1)}, std::move(out), {&top, &bottom},
                [=](TensorImpl* o) {
                  TensorImpl* pt = top.impl().get();
                  TensorImpl* pb = bottom.impl().get();
                  return [=] {
                    if (double* gt = sink(pt))
                      for (std::size_t i = 0; i < split; ++i) gt[i] += o->grad[i];
                    if (double* gb = sink(pb))
                      for (std::size_t i = split; i < o->grad.size(); ++i) gb[i - split] += o->grad[i];
                  };
                });
}

Tensor add_columnwise(const Tensor& x, const Tensor& bias) {
  require_rank("add_columnwise", x, 2);
  const std::size_t d = x.dim(0), n = x.dim(1);
  if (bias.numel() != d) throw ShapeError("add_columnwise: bias length does not match rows");
  const auto xd = x.data();
  const auto bd = bias.data();
  std::vector<double> out(d * n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + bd[i];
  return finish("add_columnwise", x.shape(), std::move(out), {&x, &bias}, [=](TensorImpl* o) {
    TensorImpl* px = x.impl().get();
    TensorImpl* pb = bias.impl().get();
    return [=] {
      if (double* gx = sink(px))
        for (std::size_t i = 0; i < d * n; ++i) gx[i] += o->grad[i];
      if (double* gb = sink(pb))
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[i] += o->grad[i * n + j];
    };
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

Tensor sum(const Tensor& a) {
  const auto ad = a.data();
  const double total = std::accumulate(ad.begin(), ad.end(), 0.0);
  return finish("sum", {}, {total}, {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      for (std::size_t i = 0; i < pa->data.size(); ++i) ga[i] += o->grad[0];
    };
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax_rows(const Tensor& a) {
  require_rank("softmax_rows", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto ad = a.data();
  require_finite("softmax_rows", ad);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = ad.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return finish("softmax_rows", a.shape(), std::move(out), {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += o->grad[i * c + j] * o->data[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          ga[i * c + j] += o->data[i * c + j] * (o->grad[i * c + j] - dot);
      }
    };
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  require_rank("layer_norm", a, 2);
  const std::size_t d = a.dim(0), n = a.dim(1);
  const auto ad = a.data();
  std::vector<double> out(d * n);
  std::vector<double> inv_std(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += ad[i * n + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (ad[i * n + j] - mu) * (ad[i * n + j] - mu);
    var /= static_cast<double>(d);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) out[i * n + j] = (ad[i * n + j] - mu) * inv_std[j];
  }
  return finish("layer_norm", a.shape(), std::move(out), {&a}, [=](TensorImpl* o) {
    TensorImpl* pa = a.impl().get();
    return [=] {
      double* ga = sink(pa);
      if (ga == nullptr) return;
      const double dd = static_cast<double>(d);
      for (std::size_t j = 0; j < n; ++j) {
        double gsum = 0.0, gy = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          gsum += o->grad[i * n + j];
          gy += o->grad[i * n + j] * o->data[i * n + j];
        }
        for (std::size_t i = 0; i < d; ++i) {
          ga[i * n + j] += inv_std[j] / dd * (dd * o->grad[i * n + j] - gsum - o->data[i * n + j] * gy);
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Spatial

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", kernel, 4);
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  const std::size_t h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  if (kernel.dim(0) != 3 || kernel.dim(1) != 3 || kernel.dim(2) != ci) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const std::size_t co = kernel.dim(3);
  if (bias.numel() != co) throw ShapeError("conv2d: bias length does not match output channels");
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t ho = (h - 1) / s + 1, wo = (w - 1) / s + 1;
  const auto xd = x.data();
  const auto kd = kernel.data();
  const auto bd = bias.data();
  std::vector<double> out(ho * wo * co);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* dst = out.data() + (oy * wo + ox) * co;
      std::copy(bd.begin(), bd.end(), dst);
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - 1;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - 1;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = xd.data() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
          const double* kbase = kd.data() + (ky * 3 + kx) * ci * co;
          for (std::size_t c = 0; c < ci; ++c) {
            const double v = src[c];
            if (v == 0.0) continue;
            const double* krow = kbase + c * co;
            for (std::size_t k = 0; k < co; ++k) dst[k] += v * krow[k];
          }
        }
      }
    }
  }
  return finish("conv2d", {ho, wo, co}, std::move(out), {&x, &kernel, &bias}, [=](TensorImpl* o) {
    TensorImpl* px = x.impl().get();
    TensorImpl* pk = kernel.impl().get();
    TensorImpl* pb = bias.impl().get();
    return [=] {
      double* gx = sink(px);
      double* gk = sink(pk);
      double* gb = sink(pb);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double* g = o->grad.data() + (oy * wo + ox) * co;
          if (gb != nullptr)
            for (std::size_t k = 0; k < co; ++k) gb[k] += g[k];
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t xoff =
                  (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
              const std::size_t koff = (ky * 3 + kx) * ci * co;
              for (std::size_t c = 0; c < ci; ++c) {
                const double* krow = pk->data.data() + koff + c * co;
                if (gx != nullptr) {
                  double acc = 0.0;
                  for (std::size_t k = 0; k < co; ++k) acc += g[k] * krow[k];
                  gx[xoff + c] += acc;
                }
                if (gk != nullptr) {
                  const double v = px->data[xoff + c];
                  if (v == 0.0) continue;
                  double* gkrow = gk + koff + c * co;
                  for (std::size_t k = 0; k < co; ++k) gkrow[k] += v * g[k];
                }
              }
            }
          }
        }
      }
    };
  });
}

Tensor upsample2x(const Tensor& x) {
  require_rank("upsample2x", x, 3);
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto xd = x.data();
  std::vector<double> out(4 * h * w * c);
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t xx = 0; xx < 2 * w; ++xx)
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(((y / 2) * w + xx / 2) * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>((y * 2 * w + xx) * c));
  return finish("upsample2x", {2 * h, 2 * w, c}, std::move(out), {&x}, [=](TensorImpl* o) {
    TensorImpl* px = x.impl().get();
    return [=] {
      double* gx = sink(px);
      if (gx == nullptr) return;
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          for (std::size_t k = 0; k < c; ++k)
            gx[((y / 2) * w + xx / 2) * c + k] += o->grad[(y * 2 * w + xx) * c + k];
    };
  });
}

// ---------------------------------------------------------------------------
// Checks and utilities

double grad_check(const std::function<Tensor()>& f, Tensor param, double h,
                  std::span<const std::size_t> coords) {
  const bool was_tracked = param.requires_grad();
  const std::vector<double> saved_grad = param.impl()->grad;
  param.set_requires_grad(true);
  param.impl()->grad.clear();

  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = f();
    }
    tape.backward(loss);
    analytic = param.grad();
  }

  NoGradGuard no_grad;
  auto values = param.mutable_data();
  double worst = 0.0;
  for (std::size_t c : coords) {
    const double original = values[c];
    values[c] = original + h;
    const double plus = f().item();
    values[c] = original - h;
    const double minus = f().item();
    values[c] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[c] - numeric) / std::max(1.0, std::abs(analytic[c])));
  }
  param.set_requires_grad(was_tracked);
  param.impl()->grad = saved_grad;
  return worst;
}

double grad_check(const std::function<Tensor()>& f, Tensor param, double h) {
  std::vector<std::size_t> coords(param.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  return grad_check(f, std::move(param), h, coords);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor probe = x.detach();
  return grad_check([&] { return f(probe); }, probe, h);
}

double l2_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

std::uint32_t checksum(std::span<const Tensor> tensors) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const Tensor& t : tensors) {
    const auto d = t.data();
    crc = crc32(crc, reinterpret_cast<const Bytef*>(d.data()), static_cast<uInt>(d.size_bytes()));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace coadapt
