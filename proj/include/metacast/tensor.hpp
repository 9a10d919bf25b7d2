// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace metacast {

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. std::mt19937_64 is bit-exact everywhere, but the
// standard <random> distributions are not, so uniform/normal are derived
// from the raw stream directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal(double mean = 0.0, double stddev = 1.0);
  std::size_t uniform_int(std::size_t n);  // [0, n)

 private:
  std::uint64_t splitmix();
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as data once a backward touched it
};

// Shared handle to a dense float64 buffer. Values are immutable once an op
// produced them; only optimizers write through mutable_values().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, double mean = 0.0);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& values() const { return impl_->data; }
  std::vector<double>& mutable_values() { return impl_->data; }
  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void set_grad(std::vector<double> g);
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const;  // deep copy of values (grad not copied)

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

// Suspends gradient recording on the active tape for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Reverse-mode tape. Scope-bound: constructing a Tape makes it the active
// recording target on this thread; ops record themselves while any input
// requires grad. One tape per thread of execution.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss)=1 and runs all recorded backward rules in reverse
  // order, depositing gradients into every requires-grad tensor reached.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }

  static Tape* active();

  struct Record {
    std::shared_ptr<TensorImpl> out;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::function<void()> back;
  };
  void push(Record r) { records_.push_back(std::move(r)); }

 private:
  std::vector<Record> records_;
};

// Compressed sparse row matrix; constant w.r.t. differentiation.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1
  std::vector<std::size_t> col_idx;
  std::vector<double> vals;

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets);
};

// ---- forward ops (each records its backward rule when an input requires grad)

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis0(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor l2_normalize(const Tensor& a);
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);
Tensor scatter_rows(const Tensor& base, const std::vector<int>& idx, const Tensor& rows);
Tensor add_rowvec(const Tensor& x, const Tensor& row);
Tensor row_scale(const Tensor& x, const Tensor& scale);
Tensor spmm(const SparseMatrix& a, const Tensor& x);

// Summed softmax cross-entropy over rows, restricted to eligible columns.
// eligible[r] is a byte mask over columns; targets[r] must be eligible.
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::vector<std::uint8_t>>& eligible);

// ---- optimizers

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  // Standard Adam update from each parameter's deposited gradient (missing
  // gradient counts as zero). Rejects non-finite gradients before touching
  // any parameter.
  void step();
  void zero_grad();
  std::int64_t step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// Plain gradient-descent step p <- p - lr * p.grad (missing grad = zero).
void sgd_step(const std::vector<Tensor>& params, double lr);

// target <- tau * target + (1 - tau) * online, elementwise.
void ema_update(const std::vector<Tensor>& target, const std::vector<Tensor>& online, double tau);

std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h = 14695981039346656037ull);
std::uint64_t checksum(const std::vector<Tensor>& tensors);

}  // namespace metacast
