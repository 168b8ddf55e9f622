#include "physgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "physgnn/error.hpp"

namespace physgnn::ad {

namespace {

double projected(const TensorFn& f, const std::vector<Tensor>& inputs, const std::vector<double>& r) {
  const Tensor out = f(inputs);
  if (out.size() != r.size()) throw ShapeError("gradcheck: output size changed between evaluations");
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(out.values()[i])) throw NumericalError("gradcheck: non-finite function value");
    s += r[i] * out.values()[i];
  }
  return s;
}

}  // namespace

GradcheckResult gradcheck_detailed(const TensorFn& f, const std::vector<Tensor>& inputs, double eps,
                                   std::uint64_t seed) {
  if (!(eps > 0.0)) throw Error("gradcheck: eps must be positive");
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) leaves.push_back(Tensor::parameter(x.shape(), {x.values().begin(), x.values().end()}));

  std::vector<double> r;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor out = f(leaves);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    r.resize(out.size());
    for (auto& v : r) v = uni(rng);
    for (double v : out.values())
      if (!std::isfinite(v)) throw NumericalError("gradcheck: non-finite function value");
    const Tensor loss = sum(mul(out, Tensor::from(out.shape(), r)));
    if (loss.requires_grad()) tape.backward(loss);
    for (const auto& x : leaves) analytic.push_back(x.grad());
  }

  GradcheckResult res;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto vals = leaves[k].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double up = projected(f, leaves, r);
      vals[i] = orig - eps;
      const double down = projected(f, leaves, r);
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      if (!std::isfinite(a)) throw NumericalError("gradcheck: non-finite analytic gradient");
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (err > res.max_relative_error) res = {err, k, i, a, numeric};
    }
  }
  return res;
}

double gradcheck(const TensorFn& f, const std::vector<Tensor>& inputs, double eps, std::uint64_t seed) {
  return gradcheck_detailed(f, inputs, eps, seed).max_relative_error;
}

}  // namespace physgnn::ad
