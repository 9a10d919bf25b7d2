// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace metacast {

namespace {

thread_local std::vector<Tape*> t_tape_stack;
thread_local int t_no_grad_depth = 0;

void ensure_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw TensorError(std::string(op) + ": produced non-finite value");
    }
  }
}

// Grad buffers are allocated by Tape::backward for every requires-grad tensor
// it reaches; constants keep an empty buffer and backward rules skip them.
std::vector<double>* grad_of(const std::shared_ptr<TensorImpl>& t) {
  return t->grad.empty() ? nullptr : &t->grad;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rng

std::uint64_t Rng::splitmix() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() { return splitmix(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return mean + stddev * u * f;
}

std::size_t Rng::uniform_int(std::size_t n) {
  if (n == 0) throw TensorError("uniform_int: empty range");
  return static_cast<std::size_t>(next_u64() % n);
}

// ---------------------------------------------------------------------------
// Shape / Tensor

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), false);
}

Tensor Tensor::full(Shape shape, double value) {
  std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, value), false);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("Tensor::from: shape " + shape_str(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  ensure_finite(values, "Tensor::from");
  return make_tensor(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(double value) { return Tensor::from({1}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, double mean) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal(mean, stddev);
  return make_tensor(std::move(shape), std::move(v), false);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw TensorError("rows(): tensor is not rank-2, shape " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw TensorError("cols(): tensor is not rank-2, shape " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw TensorError("item(): tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw TensorError("grad(): no gradient deposited");
  return impl_->grad;
}

void Tensor::set_grad(std::vector<double> g) {
  if (g.size() != impl_->data.size()) throw TensorError("set_grad: size mismatch");
  impl_->grad = std::move(g);
}

Tensor Tensor::clone() const { return make_tensor(impl_->shape, impl_->data, impl_->requires_grad); }

// ---------------------------------------------------------------------------
// Tape

NoGradGuard::NoGradGuard() { ++t_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --t_no_grad_depth; }

bool grad_enabled() { return t_no_grad_depth == 0; }

Tape::Tape() { t_tape_stack.push_back(this); }

Tape::~Tape() {
  if (!t_tape_stack.empty() && t_tape_stack.back() == this) {
    t_tape_stack.pop_back();
  }
}

Tape* Tape::active() { return t_tape_stack.empty() ? nullptr : t_tape_stack.back(); }

void Tape::backward(const Tensor& loss) {
  if (records_.empty()) throw TensorError("backward: tape is empty");
  if (loss.numel() != 1) {
    throw TensorError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  std::unordered_set<TensorImpl*> seen;
  auto reset = [&seen](const std::shared_ptr<TensorImpl>& t) {
    if (!t->requires_grad) return;
    if (seen.insert(t.get()).second) t->grad.assign(t->data.size(), 0.0);
  };
  for (const Record& r : records_) {
    reset(r.out);
    for (const auto& in : r.ins) reset(in);
  }
  loss.impl()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->back();
  }
}

// ---------------------------------------------------------------------------
// Op plumbing

namespace {

bool wants_grad(std::initializer_list<const Tensor*> ins) {
  if (t_no_grad_depth > 0 || t_tape_stack.empty()) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor finish(const char* op, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> ins,
              std::function<void(const TensorImpl&)> back) {
  ensure_finite(data, op);
  const bool rec = wants_grad(ins);
  Tensor out = make_tensor(std::move(shape), std::move(data), rec);
  if (rec) {
    Tape::Record r;
    r.out = out.handle();
    r.ins.reserve(ins.size());
    for (const Tensor* t : ins) r.ins.push_back(t->handle());
    auto oh = out.handle();
    r.back = [oh, back = std::move(back)]() { back(*oh); };
    Tape::active()->push(std::move(r));
  }
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw TensorError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
  }
}

// Elementwise unary op with dy/dx expressible from (x, y).
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Bwd dydx) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto ah = a.handle();
  return finish(op, a.shape(), std::move(out), {&a}, [ah, dydx](const TensorImpl& o) {
    if (auto* ga = grad_of(ah)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        (*ga)[i] += o.grad[i] * dydx(ah->data[i], o.data[i]);
      }
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (k != b.rows()) {
    throw TensorError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto ah = a.handle(), bh = b.handle();
  return finish("matmul", {m, n}, std::move(out), {&a, &b},
                [ah, bh, m, k, n](const TensorImpl& o) {
                  const auto& g = o.grad;
                  if (auto* ga = grad_of(ah)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p)
                          (*ga)[i * k + p] += gij * bh->data[p * n + j];
                      }
                  }
                  if (auto* gb = grad_of(bh)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        const double aip = ah->data[i * k + p];
                        if (aip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j)
                          (*gb)[p * n + j] += aip * g[i * n + j];
                      }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto ah = a.handle(), bh = b.handle();
  return finish("add", a.shape(), std::move(out), {&a, &b}, [ah, bh](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
    if (auto* gb = grad_of(bh))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += o.grad[i];
  });
}

Tensor add(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
  auto ah = a.handle();
  return finish("add_scalar", a.shape(), std::move(out), {&a}, [ah](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto ah = a.handle(), bh = b.handle();
  return finish("sub", a.shape(), std::move(out), {&a, &b}, [ah, bh](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
    if (auto* gb = grad_of(bh))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto ah = a.handle(), bh = b.handle();
  return finish("mul", a.shape(), std::move(out), {&a, &b}, [ah, bh](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i] * bh->data[i];
    if (auto* gb = grad_of(bh))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += o.grad[i] * ah->data[i];
  });
}

Tensor mul(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto ah = a.handle();
  return finish("mul_scalar", a.shape(), std::move(out), {&a}, [ah, s](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i] * s;
  });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat: no inputs");
  if (axis != 0 && axis != 1) throw TensorError("concat: axis must be 0 or 1");
  for (const Tensor& t : parts) require_rank2("concat", t);
  const std::size_t fixed = (axis == 0) ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    const std::size_t f = (axis == 0) ? t.cols() : t.rows();
    if (f != fixed) {
      throw TensorError("concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                        shape_str(t.shape()));
    }
    total += (axis == 0) ? t.rows() : t.cols();
  }
  const std::size_t out_rows = (axis == 0) ? total : parts[0].rows();
  const std::size_t out_cols = (axis == 0) ? fixed : total;
  std::vector<double> out(out_rows * out_cols);
  if (axis == 0) {
    std::size_t r0 = 0;
    for (const Tensor& t : parts) {
      std::copy(t.values().begin(), t.values().end(), out.begin() + r0 * out_cols);
      r0 += t.rows();
    }
  } else {
    std::size_t c0 = 0;
    for (const Tensor& t : parts) {
      const std::size_t c = t.cols();
      for (std::size_t i = 0; i < out_rows; ++i) {
        std::copy(t.values().begin() + i * c, t.values().begin() + (i + 1) * c,
                  out.begin() + i * out_cols + c0);
      }
      c0 += c;
    }
  }
  std::vector<std::shared_ptr<TensorImpl>> handles;
  handles.reserve(parts.size());
  bool any_grad = false;
  for (const Tensor& t : parts) {
    handles.push_back(t.handle());
    any_grad = any_grad || t.requires_grad();
  }
  // finish() takes an initializer_list; build the record manually for the
  // variadic case.
  std::vector<double> data = std::move(out);
  ensure_finite(data, "concat");
  const bool rec = (t_no_grad_depth == 0) && Tape::active() != nullptr && any_grad;
  Tensor result = make_tensor({out_rows, out_cols}, std::move(data), rec);
  if (rec) {
    Tape::Record r;
    r.out = result.handle();
    r.ins = handles;
    auto oh = result.handle();
    r.back = [oh, handles, axis, out_rows, out_cols]() {
      const auto& g = oh->grad;
      if (axis == 0) {
        std::size_t r0 = 0;
        for (const auto& h : handles) {
          const std::size_t hr = h->shape[0];
          if (auto* gh = grad_of(h)) {
            for (std::size_t i = 0; i < hr * out_cols; ++i) (*gh)[i] += g[r0 * out_cols + i];
          }
          r0 += hr;
        }
      } else {
        std::size_t c0 = 0;
        for (const auto& h : handles) {
          const std::size_t hc = h->shape[1];
          if (auto* gh = grad_of(h)) {
            for (std::size_t i = 0; i < out_rows; ++i)
              for (std::size_t j = 0; j < hc; ++j)
                (*gh)[i * hc + j] += g[i * out_cols + c0 + j];
          }
          c0 += hc;
        }
      }
    };
    Tape::active()->push(std::move(r));
  }
  return result;
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  require_rank2("slice", a);
  if (axis != 0 && axis != 1) throw TensorError("slice: axis must be 0 or 1");
  const std::size_t limit = (axis == 0) ? a.rows() : a.cols();
  if (begin >= end || end > limit) {
    throw TensorError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") out of bounds for " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t out_rows = (axis == 0) ? end - begin : m;
  const std::size_t out_cols = (axis == 0) ? n : end - begin;
  std::vector<double> out(out_rows * out_cols);
  if (axis == 0) {
    std::copy(a.values().begin() + begin * n, a.values().begin() + end * n, out.begin());
  } else {
    for (std::size_t i = 0; i < m; ++i)
      std::copy(a.values().begin() + i * n + begin, a.values().begin() + i * n + end,
                out.begin() + i * out_cols);
  }
  auto ah = a.handle();
  return finish("slice", {out_rows, out_cols}, std::move(out), {&a},
                [ah, axis, begin, n, out_rows, out_cols](const TensorImpl& o) {
                  if (auto* ga = grad_of(ah)) {
                    if (axis == 0) {
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        (*ga)[begin * n + i] += o.grad[i];
                    } else {
                      for (std::size_t i = 0; i < out_rows; ++i)
                        for (std::size_t j = 0; j < out_cols; ++j)
                          (*ga)[i * n + begin + j] += o.grad[i * out_cols + j];
                    }
                  }
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw TensorError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out = a.values();
  auto ah = a.handle();
  return finish("reshape", std::move(shape), std::move(out), {&a}, [ah](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += o.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto ah = a.handle();
  return finish("sum", {1}, {s}, {&a}, [ah](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (double& g : *ga) g += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto ah = a.handle();
  return finish("mean", {1}, {s * inv}, {&a}, [ah, inv](const TensorImpl& o) {
    if (auto* ga = grad_of(ah))
      for (double& g : *ga) g += o.grad[0] * inv;
  });
}

Tensor mean_axis0(const Tensor& a) {
  require_rank2("mean_axis0", a);
  const std::size_t m = a.rows(), n = a.cols();
  const double inv = 1.0 / static_cast<double>(m);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.values()[i * n + j];
  for (double& v : out) v *= inv;
  auto ah = a.handle();
  return finish("mean_axis0", {1, n}, std::move(out), {&a}, [ah, m, n, inv](const TensorImpl& o) {
    if (auto* ga = grad_of(ah)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += o.grad[j] * inv;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (x <= 0.0) throw TensorError("log: non-positive input " + std::to_string(x));
  }
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw TensorError("softmax: expected rank-1 or rank-2 tensor, got " + shape_str(a.shape()));
  }
  const std::size_t m = (a.rank() == 2) ? a.shape()[0] : 1;
  const std::size_t n = (a.rank() == 2) ? a.shape()[1] : a.shape()[0];
  std::vector<double> out(m * n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(av[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  auto ah = a.handle();
  return finish("softmax", a.shape(), std::move(out), {&a}, [ah, m, n](const TensorImpl& o) {
    if (auto* ga = grad_of(ah)) {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.data[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          (*ga)[i * n + j] += o.data[i * n + j] * (o.grad[i * n + j] - dot);
      }
    }
  });
}

Tensor l2_normalize(const Tensor& a) {
  double sq = 0.0;
  for (double v : a.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw TensorError("l2_normalize: zero-norm input");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / norm;
  auto ah = a.handle();
  return finish("l2_normalize", a.shape(), std::move(out), {&a}, [ah, norm](const TensorImpl& o) {
    if (auto* ga = grad_of(ah)) {
      double dot = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) dot += o.grad[i] * o.data[i];
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        (*ga)[i] += (o.grad[i] - o.data[i] * dot) / norm;
    }
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  require_rank2("gather_rows", table);
  const std::size_t n = table.cols();
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= table.rows()) {
      throw TensorError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                        shape_str(table.shape()));
    }
    std::copy(table.values().begin() + idx[r] * n, table.values().begin() + (idx[r] + 1) * n,
              out.begin() + r * n);
  }
  auto th = table.handle();
  return finish("gather_rows", {idx.size(), n}, std::move(out), {&table},
                [th, idx, n](const TensorImpl& o) {
                  if (auto* gt = grad_of(th)) {
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t j = 0; j < n; ++j)
                        (*gt)[idx[r] * n + j] += o.grad[r * n + j];
                  }
                });
}

Tensor scatter_rows(const Tensor& base, const std::vector<int>& idx, const Tensor& rows) {
  require_rank2("scatter_rows", base);
  require_rank2("scatter_rows", rows);
  if (rows.rows() != idx.size() || rows.cols() != base.cols()) {
    throw TensorError("scatter_rows: rows shape " + shape_str(rows.shape()) +
                      " does not match index count " + std::to_string(idx.size()) + " and base " +
                      shape_str(base.shape()));
  }
  const std::size_t n = base.cols();
  std::vector<std::uint8_t> touched(base.rows(), 0);
  std::vector<double> out = base.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= base.rows()) {
      throw TensorError("scatter_rows: index " + std::to_string(idx[r]) + " out of range");
    }
    if (touched[idx[r]]) throw TensorError("scatter_rows: duplicate index " + std::to_string(idx[r]));
    touched[idx[r]] = 1;
    std::copy(rows.values().begin() + r * n, rows.values().begin() + (r + 1) * n,
              out.begin() + idx[r] * n);
  }
  auto bh = base.handle(), rh = rows.handle();
  return finish("scatter_rows", base.shape(), std::move(out), {&base, &rows},
                [bh, rh, idx, n, touched](const TensorImpl& o) {
                  if (auto* gb = grad_of(bh)) {
                    for (std::size_t i = 0; i < bh->shape[0]; ++i) {
                      if (touched[i]) continue;
                      for (std::size_t j = 0; j < n; ++j) (*gb)[i * n + j] += o.grad[i * n + j];
                    }
                  }
                  if (auto* gr = grad_of(rh)) {
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t j = 0; j < n; ++j)
                        (*gr)[r * n + j] += o.grad[idx[r] * n + j];
                  }
                });
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  require_rank2("add_rowvec", x);
  require_rank2("add_rowvec", row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw TensorError("add_rowvec: row shape " + shape_str(row.shape()) + " does not broadcast over " +
                      shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.values()[i * n + j] + row.values()[j];
  auto xh = x.handle(), rh = row.handle();
  return finish("add_rowvec", x.shape(), std::move(out), {&x, &row},
                [xh, rh, m, n](const TensorImpl& o) {
                  if (auto* gx = grad_of(xh))
                    for (std::size_t i = 0; i < o.grad.size(); ++i) (*gx)[i] += o.grad[i];
                  if (auto* gr = grad_of(rh)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) (*gr)[j] += o.grad[i * n + j];
                  }
                });
}

Tensor row_scale(const Tensor& x, const Tensor& scale) {
  require_rank2("row_scale", x);
  require_rank2("row_scale", scale);
  if (scale.rows() != x.rows() || scale.cols() != 1) {
    throw TensorError("row_scale: scale shape " + shape_str(scale.shape()) + " does not match " +
                      shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.values()[i * n + j] * scale.values()[i];
  auto xh = x.handle(), sh = scale.handle();
  return finish("row_scale", x.shape(), std::move(out), {&x, &scale},
                [xh, sh, m, n](const TensorImpl& o) {
                  if (auto* gx = grad_of(xh)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        (*gx)[i * n + j] += o.grad[i * n + j] * sh->data[i];
                  }
                  if (auto* gs = grad_of(sh)) {
                    for (std::size_t i = 0; i < m; ++i) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        acc += o.grad[i * n + j] * xh->data[i * n + j];
                      (*gs)[i] += acc;
                    }
                  }
                });
}

SparseMatrix SparseMatrix::from_triplets(
    std::size_t rows, std::size_t cols,
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets) {
  std::sort(triplets.begin(), triplets.end());
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  m.col_idx.reserve(triplets.size());
  m.vals.reserve(triplets.size());
  for (const auto& [r, c, v] : triplets) {
    if (r >= rows || c >= cols) throw TensorError("SparseMatrix: triplet out of range");
    m.row_ptr[r + 1]++;
    m.col_idx.push_back(c);
    m.vals.push_back(v);
  }
  for (std::size_t i = 0; i < rows; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

Tensor spmm(const SparseMatrix& a, const Tensor& x) {
  require_rank2("spmm", x);
  if (a.cols != x.rows()) {
    throw TensorError("spmm: sparse (" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                      ") does not match dense " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols();
  std::vector<double> out(a.rows * n, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const double v = a.vals[p];
      const double* xrow = &x.values()[a.col_idx[p] * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += v * xrow[j];
    }
  }
  auto xh = x.handle();
  // the sparse matrix is captured by value (cheap enough at this scale)
  return finish("spmm", {a.rows, n}, std::move(out), {&x}, [xh, a, n](const TensorImpl& o) {
    if (auto* gx = grad_of(xh)) {
      for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
          const double v = a.vals[p];
          const std::size_t c = a.col_idx[p];
          for (std::size_t j = 0; j < n; ++j) (*gx)[c * n + j] += v * o.grad[i * n + j];
        }
      }
    }
  });
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::vector<std::uint8_t>>& eligible) {
  require_rank2("cross_entropy_masked", logits);
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || eligible.size() != m) {
    throw TensorError("cross_entropy_masked: expected " + std::to_string(m) +
                      " targets/masks, got " + std::to_string(targets.size()) + "/" +
                      std::to_string(eligible.size()));
  }
  double loss = 0.0;
  std::vector<double> lses(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (eligible[i].size() != n) throw TensorError("cross_entropy_masked: mask width mismatch");
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n || !eligible[i][t]) {
      throw TensorError("cross_entropy_masked: target " + std::to_string(t) +
                        " not eligible at row " + std::to_string(i));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (eligible[i][j]) mx = std::max(mx, logits.values()[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (eligible[i][j]) z += std::exp(logits.values()[i * n + j] - mx);
    const double lse = mx + std::log(z);
    lses[i] = lse;
    loss += lse - logits.values()[i * n + t];
  }
  auto lh = logits.handle();
  return finish("cross_entropy_masked", {1}, {loss}, {&logits},
                [lh, targets, eligible, lses, m, n](const TensorImpl& o) {
                  if (auto* gl = grad_of(lh)) {
                    const double g = o.grad[0];
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        if (!eligible[i][j]) continue;
                        const double p = std::exp(lh->data[i * n + j] - lses[i]);
                        double d = p;
                        if (static_cast<int>(j) == targets[i]) d -= 1.0;
                        (*gl)[i * n + j] += g * d;
                      }
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Optimizers

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0);
    v_[i].assign(params_[i].numel(), 0.0);
  }
}

void Adam::step() {
  // Validate every gradient before mutating anything.
  for (const Tensor& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw TensorError("adam_step: non-finite gradient");
    }
    if (p.grad().size() != p.numel()) throw TensorError("adam_step: gradient shape mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& val = params_[i].mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    const std::vector<double>* grad = params_[i].has_grad() ? &params_[i].grad() : nullptr;
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grad ? (*grad)[j] : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

void sgd_step(const std::vector<Tensor>& params, double lr) {
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw TensorError("sgd_step: non-finite gradient");
    }
  }
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    auto& val = const_cast<Tensor&>(p).mutable_values();
    const auto& g = p.grad();
    for (std::size_t j = 0; j < val.size(); ++j) val[j] -= lr * g[j];
  }
}

void ema_update(const std::vector<Tensor>& target, const std::vector<Tensor>& online, double tau) {
  if (tau < 0.0 || tau > 1.0) {
    throw TensorError("ema_update: tau " + std::to_string(tau) + " outside [0, 1]");
  }
  if (target.size() != online.size()) {
    throw TensorError("ema_update: partition size mismatch, " + std::to_string(target.size()) +
                      " vs " + std::to_string(online.size()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].shape() != online[i].shape()) {
      throw TensorError("ema_update: shape mismatch " + shape_str(target[i].shape()) + " vs " +
                        shape_str(online[i].shape()));
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = const_cast<Tensor&>(target[i]).mutable_values();
    const auto& o = online[i].values();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * t[j] + (1.0 - tau) * o[j];
  }
}

std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t checksum(const std::vector<Tensor>& tensors) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Tensor& t : tensors) {
    h = fnv1a(t.values().data(), t.values().size() * sizeof(double), h);
  }
  return h;
}

}  // namespace metacast
