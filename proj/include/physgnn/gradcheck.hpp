#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "physgnn/autodiff.hpp"

namespace physgnn::ad {

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the tape gradient of sum(r * f(inputs)), with r a fixed random
// projection drawn from `seed`, against central differences of step `eps`
// for every element of every input. The relative error of one element is
// |a - n| / max(|a|, |n|, 1e-8). Throws NumericalError when f produces a
// non-finite value.
GradcheckResult gradcheck_detailed(const TensorFn& f, const std::vector<Tensor>& inputs, double eps,
                                   std::uint64_t seed = 0);

double gradcheck(const TensorFn& f, const std::vector<Tensor>& inputs, double eps, std::uint64_t seed = 0);

}  // namespace physgnn::ad
