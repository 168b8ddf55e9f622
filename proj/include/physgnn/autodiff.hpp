#pragma once

// Dense reverse-mode automatic differentiation over row-major double tensors.
//
// Ops record themselves on the calling thread's active Tape (see TapeScope)
// whenever at least one input requires a gradient. Without an active tape,
// ops compute values only. Tape::backward walks the recorded entries in
// reverse order, so each backward rule runs exactly once and contributions
// to a tensor used several times accumulate.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace physgnn::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);
std::size_t shape_size(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::int64_t tape_index = -1;

  // Zero-initialised gradient buffer, allocated on first use.
  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);
  // Leaf tensor that accumulates gradients (a trainable parameter).
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->value; }
  std::span<double> mutable_values() { return impl_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return impl_->value[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  // Gradient accumulated by backward; zeros when none flowed.
  std::vector<double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }

  // Copy of the values with no autodiff history.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reads `out.grad` and accumulates into the inputs that require grad.
using BackwardRule = std::function<void(TensorImpl& out, std::span<TensorImpl* const> inputs)>;

class Tape {
 public:
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs every backward rule recorded at or
  // before the loss, newest first. Throws ShapeError for a non-scalar loss
  // and Error when the loss was not recorded on this tape.
  void backward(const Tensor& loss);

  void record(const std::shared_ptr<TensorImpl>& out, std::vector<std::shared_ptr<TensorImpl>> inputs,
              BackwardRule rule);

 private:
  struct Entry {
    std::shared_ptr<TensorImpl> out;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardRule rule;
  };
  std::vector<Entry> entries_;
};

// Installs a tape as the current thread's recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* current_tape();

// Builds an op result and, when recording applies, registers `rule`. Every
// built-in op goes through here; tests use it to define ad-hoc ops.
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs, BackwardRule rule);

// Convenience wrapper around Tape::backward for the current tape.
void backward(const Tensor& loss);

// ---- Ops ----
Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)(k,n)
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // (m,k)(n,k)^T, i.e. x W^T
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor add_bias(const Tensor& x, const Tensor& bias);  // (m,n) + (n) per row
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor concat(const std::vector<Tensor>& parts);  // along the last dim
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor softmax(const Tensor& x);  // over the last dim
// out[i] = x[index[i]]. `index` must outlive the tape's backward pass.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index);
// Row sums over CSR segments; empty segments give zero rows.
Tensor segment_sum(const Tensor& x, std::span<const std::int64_t> offsets);
// Elementwise max over CSR segments; empty segments give zero rows. The
// gradient goes to the winning row (lowest index on ties).
Tensor segment_max(const Tensor& x, std::span<const std::int64_t> offsets);
// x (m,n) with every row r multiplied by s[r]; s is (m,1) and differentiable.
Tensor scale_rows(const Tensor& x, const Tensor& s);
// Constant per-row weights.
Tensor scale_rows(const Tensor& x, std::span<const double> w);
// Inverted dropout; identity when `train` is false.
Tensor dropout(const Tensor& x, double p, bool train, std::uint64_t seed);
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor row_sum(const Tensor& x);  // (m,n) -> (m,1)

}  // namespace physgnn::ad
