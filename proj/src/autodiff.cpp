#include "physgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "physgnn/error.hpp"
#include "physgnn/kernels.hpp"

namespace physgnn::ad {

namespace {

thread_local Tape* g_current_tape = nullptr;

kernels::ConstMatrixView cview(const TensorImpl& t) { return {t.value.data(), t.shape[0], t.shape[1]}; }
kernels::ConstMatrixView cgrad(const TensorImpl& t) { return {t.grad.data(), t.shape[0], t.shape[1]}; }
kernels::MatrixView gview(TensorImpl& t) { return {t.grad_buffer().data(), t.shape[0], t.shape[1]}; }

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_matrix(const std::string& op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(op + ": expected a matrix, got shape " + shape_string(t.shape()));
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

template <typename F>
Tensor unary(const Tensor& x, F&& fn, BackwardRule rule) {
  std::vector<double> v(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(xv[i]);
  return make_result(x.shape(), std::move(v), {x}, std::move(rule));
}

}  // namespace

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape.empty() || shape.size() > 3) throw ShapeError("tensor rank must be 1..3, got " + shape_string(shape));
  if (shape_size(shape) != values.size())
    throw ShapeError("tensor " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                     " values, got " + std::to_string(values.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

std::size_t Tensor::rows() const { return impl_->shape.size() == 2 ? impl_->shape[0] : 1; }
std::size_t Tensor::cols() const { return impl_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->value[0];
}

std::vector<double> Tensor::grad() const {
  return impl_->grad.empty() ? std::vector<double>(size(), 0.0) : impl_->grad;
}

Tensor Tensor::detach() const { return from(shape(), impl_->value); }

void Tape::record(const std::shared_ptr<TensorImpl>& out, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  BackwardRule rule) {
  out->tape_index = static_cast<std::int64_t>(entries_.size());
  out->requires_grad = true;
  entries_.push_back({out, std::move(inputs), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  const auto idx = loss.impl()->tape_index;
  if (idx < 0 || idx >= static_cast<std::int64_t>(entries_.size()) || entries_[idx].out.get() != loss.impl())
    throw Error("backward: loss is not recorded on this tape");
  loss.impl()->grad_buffer()[0] += 1.0;
  std::vector<TensorImpl*> raw;
  for (auto i = idx; i >= 0; --i) {
    auto& e = entries_[i];
    if (e.out->grad.empty()) continue;
    raw.clear();
    for (const auto& in : e.inputs) raw.push_back(in.get());
    e.rule(*e.out, raw);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

Tape* current_tape() { return g_current_tape; }

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs, BackwardRule rule) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  Tape* tape = g_current_tape;
  if (!tape) return out;
  const bool track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!track) return out;
  std::vector<std::shared_ptr<TensorImpl>> ins;
  ins.reserve(inputs.size());
  for (const auto& t : inputs) ins.push_back(t.shared());
  tape->record(out.shared(), std::move(ins), std::move(rule));
  return out;
}

void backward(const Tensor& loss) {
  if (!g_current_tape) throw Error("backward: no active tape");
  g_current_tape->backward(loss);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  std::vector<double> v(a.rows() * b.cols(), 0.0);
  kernels::gemm_nn_acc(cview(*a.impl()), cview(*b.impl()), {v.data(), a.rows(), b.cols()});
  return make_result({a.rows(), b.cols()}, std::move(v), {a, b}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) kernels::gemm_nt_acc(cgrad(out), cview(*in[1]), gview(*in[0]));
    if (in[1]->requires_grad) kernels::gemm_tn_acc(cview(*in[0]), cgrad(out), gview(*in[1]));
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_bt", a);
  require_matrix("matmul_bt", b);
  if (a.cols() != b.cols()) shape_fail("matmul_bt", a.shape(), b.shape());
  std::vector<double> v(a.rows() * b.rows(), 0.0);
  kernels::gemm_nt_acc(cview(*a.impl()), cview(*b.impl()), {v.data(), a.rows(), b.rows()});
  return make_result({a.rows(), b.rows()}, std::move(v), {a, b}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) kernels::gemm_nn_acc(cgrad(out), cview(*in[1]), gview(*in[0]));
    if (in[1]->requires_grad) kernels::gemm_tn_acc(cgrad(out), cview(*in[0]), gview(*in[1]));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    for (auto* t : in)
      if (t->requires_grad) {
        auto& g = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
      }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) {
      auto& g = in[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
    if (in[1]->requires_grad) {
      auto& g = in[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) {
      auto& g = in[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * in[1]->value[i];
    }
    if (in[1]->requires_grad) {
      auto& g = in[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * in[0]->value[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix("add_bias", x);
  if (bias.size() != x.cols()) shape_fail("add_bias", x.shape(), bias.shape());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> v(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] += bias.values()[c];
  return make_result(x.shape(), std::move(v), {x, bias}, [m, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) {
      auto& g = in[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
    if (in[1]->requires_grad) {
      auto& g = in[1]->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += out.grad[r * n + c];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * out.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_fail("concat", parts[0].shape(), p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> v(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t r = 0; r < m; ++r)
      std::copy(pv.begin() + r * widths[k], pv.begin() + (r + 1) * widths[k], v.begin() + r * total + off);
    off += widths[k];
  }
  return make_result({m, total}, std::move(v), parts,
                     [m, total, widths](TensorImpl& out, std::span<TensorImpl* const> in) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < in.size(); ++k) {
                         if (in[k]->requires_grad) {
                           auto& g = in[k]->grad_buffer();
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t c = 0; c < widths[k]; ++c)
                               g[r * widths[k] + c] += out.grad[r * total + off + c];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix("slice_cols", x);
  if (begin >= end || end > x.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_string(x.shape()));
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  std::vector<double> v(m * w);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < w; ++c) v[r * w + c] = x.values()[r * n + begin + c];
  return make_result({m, w}, std::move(v), {x}, [m, n, w, begin](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) g[r * n + begin + c] += out.grad[r * w + c];
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[0]->value[i] > 0.0) g[i] += out.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](TensorImpl& out, std::span<TensorImpl* const> in) {
        auto& g = in[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * out.value[i] * (1.0 - out.value[i]);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](TensorImpl& out, std::span<TensorImpl* const> in) {
        auto& g = in[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * (1.0 - out.value[i] * out.value[i]);
      });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw NumericalError("sqrt of negative value");
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](TensorImpl& out, std::span<TensorImpl* const> in) {
        auto& g = in[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * 0.5 / out.value[i];
      });
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = x.cols();
  const std::size_t m = x.size() / n;
  std::vector<double> v(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < m; ++r) {
    double hi = xv[r * n];
    for (std::size_t c = 1; c < n; ++c) hi = std::max(hi, xv[r * n + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (v[r * n + c] = std::exp(xv[r * n + c] - hi));
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] /= z;
  }
  return make_result(x.shape(), std::move(v), {x}, [m, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += out.grad[r * n + c] * out.value[r * n + c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += out.value[r * n + c] * (out.grad[r * n + c] - dot);
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index) {
  require_matrix("gather_rows", x);
  for (auto i : index)
    if (i < 0 || static_cast<std::size_t>(i) >= x.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " + shape_string(x.shape()));
  const std::size_t n = x.cols();
  std::vector<double> v(index.size() * n);
  kernels::gather_rows(cview(*x.impl()), index, {v.data(), index.size(), n});
  return make_result({index.size(), n}, std::move(v), {x}, [index](TensorImpl& out, std::span<TensorImpl* const> in) {
    kernels::scatter_add_rows(cgrad(out), index, gview(*in[0]));
  });
}

Tensor segment_sum(const Tensor& x, std::span<const std::int64_t> offsets) {
  require_matrix("segment_sum", x);
  if (offsets.empty() || offsets.front() != 0 || static_cast<std::size_t>(offsets.back()) != x.rows())
    throw ShapeError("segment_sum: offsets do not cover the " + std::to_string(x.rows()) + " input rows");
  const std::size_t segs = offsets.size() - 1, n = x.cols();
  std::vector<double> v(segs * n);
  kernels::segment_sum(cview(*x.impl()), offsets, {v.data(), segs, n});
  return make_result({segs, n}, std::move(v), {x}, [offsets, segs, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t s = 0; s < segs; ++s)
      for (auto r = offsets[s]; r < offsets[s + 1]; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += out.grad[s * n + c];
  });
}

Tensor segment_max(const Tensor& x, std::span<const std::int64_t> offsets) {
  require_matrix("segment_max", x);
  if (offsets.empty() || offsets.front() != 0 || static_cast<std::size_t>(offsets.back()) != x.rows())
    throw ShapeError("segment_max: offsets do not cover the " + std::to_string(x.rows()) + " input rows");
  const std::size_t segs = offsets.size() - 1, n = x.cols();
  std::vector<double> v(segs * n);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(segs * n);
  kernels::segment_max(cview(*x.impl()), offsets, {v.data(), segs, n}, *argmax);
  return make_result({segs, n}, std::move(v), {x}, [argmax, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t k = 0; k < argmax->size(); ++k) {
      const auto r = (*argmax)[k];
      if (r >= 0) g[r * n + k % n] += out.grad[k];
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_matrix("scale_rows", x);
  if (s.size() != x.rows()) shape_fail("scale_rows", x.shape(), s.shape());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> v(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = x.values()[r * n + c] * s.values()[r];
  return make_result(x.shape(), std::move(v), {x, s}, [m, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    if (in[0]->requires_grad) {
      auto& g = in[0]->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += out.grad[r * n + c] * in[1]->value[r];
    }
    if (in[1]->requires_grad) {
      auto& g = in[1]->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += out.grad[r * n + c] * in[0]->value[r * n + c];
        g[r] += acc;
      }
    }
  });
}

Tensor scale_rows(const Tensor& x, std::span<const double> w) {
  require_matrix("scale_rows", x);
  if (w.size() != x.rows()) throw ShapeError("scale_rows: " + std::to_string(w.size()) + " weights for " + shape_string(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> v(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = x.values()[r * n + c] * w[r];
  return make_result(x.shape(), std::move(v), {x}, [w, m, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += out.grad[r * n + c] * w[r];
  });
}

Tensor dropout(const Tensor& x, double p, bool train, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  for (auto& m : *mask) m = keep(rng) ? s : 0.0;
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * (*mask)[i];
  return make_result(x.shape(), std::move(v), {x}, [mask](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * (*mask)[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1, 1}, {s}, {x}, [](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (auto& gi : g) gi += out.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return make_result({1, 1}, {s * inv}, {x}, [inv](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (auto& gi : g) gi += out.grad[0] * inv;
  });
}

Tensor row_sum(const Tensor& x) {
  require_matrix("row_sum", x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> v(m, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r] += x.values()[r * n + c];
  return make_result({m, 1}, std::move(v), {x}, [m, n](TensorImpl& out, std::span<TensorImpl* const> in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += out.grad[r];
  });
}

}  // namespace physgnn::ad
