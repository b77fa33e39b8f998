#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cha/errors.hpp"

namespace cha {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

// Dense float64 array with an optional gradient accumulator.
//
// Tensor is a shared handle: copies alias the same storage, the way graph
// nodes alias their inputs. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // shape[0]
  std::size_t cols() const;  // shape[1]; 1 for vectors

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // Empty span when the tensor does not track gradients.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  const void* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

void zero_grads(std::span<Tensor> tensors);

// Ordered record of differentiable operations for one forward pass.
//
// Operations append themselves while the tape is active on the current
// thread (see TapeScope). backward() walks the record in reverse, so every
// operation runs its local rule exactly once per call. Gradients of leaf
// tensors accumulate across calls until zero_grads(); intermediate
// gradients are reset at the start of each call.
class Tape {
 public:
  using BackwardRule = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule);
  void backward(const Tensor& loss);
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };
  std::vector<Record> records_;
};

// Makes a tape the recording target for operations on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// --- Operations -----------------------------------------------------------
// Every op computes its forward value eagerly. When a tape is active and any
// input requires a gradient, the op records its backward rule.

// Matrix product. A 1-D left operand acts as a row vector and a 1-D right
// operand as a column vector; the corresponding extent is dropped from the
// result.
Tensor matmul(const Tensor& a, const Tensor& b);
// Same-shape sum, or matrix [m×n] plus bias vector [n] added to every row.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh_activation(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Softmax over a vector, max-subtracted.
Tensor softmax(const Tensor& v);
// Stacks along the leading axis: vectors join end to end, matrices stack rows.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_rows(std::initializer_list<Tensor> parts);
// Joins matrices with equal row counts side by side.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
// Broadcasts a vector into `count` identical rows.
Tensor repeat_rows(const Tensor& v, std::size_t count);
Tensor slice(const Tensor& v, std::size_t offset, std::size_t length);
// Row `index` of a matrix as a vector (embedding lookup).
Tensor row(const Tensor& m, std::size_t index);
Tensor sum(const Tensor& a);
// -log softmax(logits)[target], fused for stability.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

}  // namespace cha
