#include "cha/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cha/kernels.hpp"

namespace cha {

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};
}  // namespace detail

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

thread_local Tape* t_active_tape = nullptr;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

// Records `out` on the active tape when any input tracks gradients.
template <typename Rule>
void maybe_record(std::vector<Tensor> inputs, Tensor& out, Rule&& rule) {
  Tape* tape = active_tape();
  if (!tape) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(std::move(inputs), out, std::forward<Rule>(rule));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = product(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  if (product(shape) != values.size())
    throw ShapeError("tensor shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }
std::size_t Tensor::rows() const { return shape()[0]; }
std::size_t Tensor::cols() const { return rank() > 1 ? shape()[1] : 1; }

std::span<double> Tensor::data() {
  require_defined(*this, "data");
  return impl_->data;
}
std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  require_defined(*this, "set_requires_grad");
  impl_->requires_grad = on;
  if (on && impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  if (!on) impl_->grad.clear();
}

std::span<double> Tensor::grad() { return impl_ ? std::span<double>(impl_->grad) : std::span<double>(); }
std::span<const double> Tensor::grad() const {
  return impl_ ? std::span<const double>(impl_->grad) : std::span<const double>();
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  return from(impl_->shape, impl_->data, impl_->requires_grad);
}

void zero_grads(std::span<Tensor> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

// --- Tape -----------------------------------------------------------------

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule) {
  records_.push_back({std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any tracked tensor");
  const bool recorded = std::any_of(records_.begin(), records_.end(),
                                    [&](const Record& r) { return r.output.id() == loss.id(); });
  if (!recorded && !records_.empty()) throw ContractError("backward: loss was not produced on this tape");
  for (auto& r : records_) r.output.zero_grad();
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->rule();
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

// --- Operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() > 2 || b.rank() > 2) throw ShapeError("matmul supports rank 1 and 2 only");
  const std::size_t m = a.rank() == 2 ? a.rows() : 1;
  const std::size_t k = a.rank() == 2 ? a.cols() : a.rows();
  const std::size_t kb = b.rows();
  const std::size_t p = b.rank() == 2 ? b.cols() : 1;
  if (k != kb)
    throw ShapeError("matmul: inner dimensions differ between " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  Shape out_shape;
  if (a.rank() == 2) out_shape.push_back(m);
  if (b.rank() == 2) out_shape.push_back(p);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out = Tensor::zeros(out_shape);
  kernels::gemm({m, p, k, false, false}, a.data(), b.data(), out.data());

  maybe_record({a, b}, out, [a = Tensor(a), b = Tensor(b), out, m, p, k]() mutable {
    auto g = std::span<const double>(out.grad());
    if (a.requires_grad())  // dA = dC · Bᵀ
      kernels::gemm({m, k, p, false, true}, g, b.data(), a.grad(), true);
    if (b.requires_grad())  // dB = Aᵀ · dC
      kernels::gemm({k, p, m, true, false}, a.data(), g, b.grad(), true);
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const bool same = a.shape() == b.shape();
  const bool bias = a.rank() == 2 && b.rank() == 1 && b.rows() == a.cols();
  if (!same && !bias)
    throw ShapeError("add: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  Tensor out = a.clone();
  out.set_requires_grad(false);
  auto o = out.data();
  auto bd = b.data();
  const std::size_t nb = bd.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % nb];

  maybe_record({a, b}, out, [a = Tensor(a), b = Tensor(b), out, nb]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape())
    throw ShapeError("mul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  std::vector<double> v(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ad[i] * bd[i];
  Tensor out = Tensor::from(a.shape(), std::move(v));
  maybe_record({a, b}, out, [a = Tensor(a), b = Tensor(b), out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      auto bd = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      auto ad = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> v(a.data().begin(), a.data().end());
  for (auto& x : v) x *= factor;
  Tensor out = Tensor::from(a.shape(), std::move(v));
  maybe_record({a}, out, [a = Tensor(a), out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
  return out;
}

Tensor tanh_activation(const Tensor& x) {
  require_defined(x, "tanh");
  std::vector<double> v(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(xd[i]);
  Tensor out = Tensor::from(x.shape(), std::move(v));
  maybe_record({x}, out, [x = Tensor(x), out]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  std::vector<double> v(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Split by sign so exp never overflows.
    const double z = xd[i];
    if (z >= 0) {
      v[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      v[i] = e / (1.0 + e);
    }
  }
  Tensor out = Tensor::from(x.shape(), std::move(v));
  maybe_record({x}, out, [x = Tensor(x), out]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  return out;
}

Tensor softmax(const Tensor& v) {
  if (!v.defined() || v.numel() == 0) throw DomainError("softmax of an empty vector");
  if (v.rank() != 1) throw ShapeError("softmax expects a vector, got " + to_string(v.shape()));
  auto x = v.data();
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (auto& e : y) e /= total;
  Tensor out = Tensor::vector(std::move(y));
  maybe_record({v}, out, [v = Tensor(v), out]() mutable {
    auto g = out.grad();
    auto y = out.data();
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    auto gx = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
  });
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of an empty list");
  const std::size_t rank = parts[0].rank();
  const std::size_t width = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_rows");
    if (p.rank() != rank || (rank == 2 && p.cols() != width))
      throw ShapeError("concat_rows: part " + to_string(p.shape()) + " incompatible with " +
                       to_string(parts[0].shape()));
    rows += p.rows();
  }
  std::vector<double> v;
  v.reserve(rows * width);
  for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
  Shape shape = rank == 2 ? Shape{rows, width} : Shape{rows};
  Tensor out = Tensor::from(std::move(shape), std::move(v));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  maybe_record(inputs, out, [inputs, out]() mutable {
    auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : inputs) {
      const std::size_t n = p.numel();
      if (p.requires_grad()) {
        auto gp = p.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
  return out;
}

Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of an empty list");
  const std::size_t rows = parts[0].rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rank() != 2 || p.rows() != rows)
      throw ShapeError("concat_cols: part " + to_string(p.shape()) + " incompatible with " +
                       to_string(parts[0].shape()));
    width += p.cols();
  }
  std::vector<double> v(rows * width);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    auto pd = p.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pd.begin() + r * c, c, v.begin() + r * width + offset);
    offset += c;
  }
  Tensor out = Tensor::from({rows, width}, std::move(v));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  maybe_record(inputs, out, [inputs, out, rows, width]() mutable {
    auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : inputs) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        auto gp = p.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * width + offset + j];
      }
      offset += c;
    }
  });
  return out;
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor repeat_rows(const Tensor& v, std::size_t count) {
  require_defined(v, "repeat_rows");
  if (v.rank() != 1) throw ShapeError("repeat_rows expects a vector, got " + to_string(v.shape()));
  if (count == 0) throw ShapeError("repeat_rows: count must be positive");
  const std::size_t n = v.numel();
  std::vector<double> out_v;
  out_v.reserve(n * count);
  for (std::size_t r = 0; r < count; ++r) out_v.insert(out_v.end(), v.data().begin(), v.data().end());
  Tensor out = Tensor::from({count, n}, std::move(out_v));
  maybe_record({v}, out, [v = Tensor(v), out, n]() mutable {
    auto g = out.grad();
    auto gv = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gv[i % n] += g[i];
  });
  return out;
}

Tensor slice(const Tensor& v, std::size_t offset, std::size_t length) {
  require_defined(v, "slice");
  if (v.rank() != 1) throw ShapeError("slice expects a vector, got " + to_string(v.shape()));
  if (length == 0 || offset + length > v.numel())
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") outside vector of length " + std::to_string(v.numel()));
  std::vector<double> s(v.data().begin() + offset, v.data().begin() + offset + length);
  Tensor out = Tensor::vector(std::move(s));
  maybe_record({v}, out, [v = Tensor(v), out, offset]() mutable {
    auto g = out.grad();
    auto gv = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gv[offset + i] += g[i];
  });
  return out;
}

Tensor row(const Tensor& m, std::size_t index) {
  require_defined(m, "row");
  if (m.rank() != 2) throw ShapeError("row expects a matrix, got " + to_string(m.shape()));
  if (index >= m.rows())
    throw IndexError("row " + std::to_string(index) + " outside matrix " + to_string(m.shape()));
  const std::size_t c = m.cols();
  std::vector<double> v(m.data().begin() + index * c, m.data().begin() + (index + 1) * c);
  Tensor out = Tensor::vector(std::move(v));
  maybe_record({m}, out, [m = Tensor(m), out, index, c]() mutable {
    auto g = out.grad();
    auto gm = m.grad();
    for (std::size_t j = 0; j < c; ++j) gm[index * c + j] += g[j];
  });
  return out;
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor out = Tensor::scalar(s);
  maybe_record({a}, out, [a = Tensor(a), out]() mutable {
    const double g = out.grad()[0];
    for (auto& x : a.grad()) x += g;
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  require_defined(logits, "cross_entropy");
  if (logits.rank() != 1) throw ShapeError("cross_entropy expects a logit vector, got " + to_string(logits.shape()));
  if (target >= logits.numel())
    throw IndexError("cross_entropy target " + std::to_string(target) + " outside " +
                     std::to_string(logits.numel()) + " classes");
  auto x = logits.data();
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double xi : x) total += std::exp(xi - mx);
  const double log_z = mx + std::log(total);
  Tensor out = Tensor::scalar(log_z - x[target]);
  maybe_record({logits}, out, [logits = Tensor(logits), out, target, log_z]() mutable {
    const double g = out.grad()[0];
    auto x = logits.data();
    auto gx = logits.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double p = std::exp(x[i] - log_z);
      gx[i] += g * (p - (i == target ? 1.0 : 0.0));
    }
  });
  return out;
}

}  // namespace cha
