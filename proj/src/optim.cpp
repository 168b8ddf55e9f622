#include <cmath>

#include "physgnn/error.hpp"
#include "physgnn/train.hpp"

namespace physgnn::train {

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, const AdamWOptions& o) {
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= lr * o.weight_decay * param[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
  }
}

AdamW::AdamW(std::vector<gnn::NamedTensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options), lr_(options.lr) {
  if (!(lr_ > 0.0)) throw ConfigError("learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::step() {
  for (const auto& p : params_)
    if (p.tensor.has_grad())
      for (double g : p.tensor.impl()->grad)
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + p.name);
  ++step_;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    std::span<const double> g;
    if (t.has_grad()) {
      g = t.impl()->grad;
    } else {
      zeros.assign(t.size(), 0.0);
      g = zeros;
    }
    adamw_update(t.mutable_values(), g, m_[i], v_[i], step_, lr_, options_);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double PlateauScheduler::step(double val_loss, double lr) {
  if (val_loss < best_ - o_.threshold) {
    best_ = val_loss;
    stagnant_ = 0;
    return lr;
  }
  if (++stagnant_ >= o_.patience) {
    stagnant_ = 0;
    return std::max(lr * o_.factor, o_.min_lr);
  }
  return lr;
}

bool EarlyStopper::update(double val_loss) {
  improved_ = val_loss < best_ - o_.threshold;
  if (improved_) {
    best_ = val_loss;
    stagnant_ = 0;
  } else {
    ++stagnant_;
  }
  return stagnant_ >= o_.early_stop_patience;
}

}  // namespace physgnn::train
