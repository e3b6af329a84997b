#include "hynt/optim.hpp"

#include <cmath>

namespace hynt {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), real(0));
    v_.emplace_back(p.size(), real(0));
  }
}

void Adam::step(real lr) {
  ++t_;
  const real bc1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(t_));
  const real bc2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    std::vector<real>& value = p.raw_values();
    const std::vector<real>& grad = p.grad();  // may be empty: zero gradient
    std::vector<real>& m = m_[pi];
    std::vector<real>& v = v_[pi];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const real g = grad.empty() ? real(0) : grad[i];
      m[i] = cfg_.beta1 * m[i] + (real(1) - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (real(1) - cfg_.beta2) * g * g;
      const real m_hat = m[i] / bc1;
      const real v_hat = v[i] / bc2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

real CosineRestartSchedule::lr_at(double t) const {
  if (t < 0) t = 0;
  double remaining = t;
  double len = period;
  while (remaining >= len) {
    remaining -= len;
    len *= t_mult;
  }
  const double phase = remaining / len;
  const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
  return min_lr + (base_lr - min_lr) * static_cast<real>(cosine);
}

}  // namespace hynt
