#pragma once

#include <cstdint>
#include <vector>

#include "hynt/tensor.hpp"

namespace hynt {

struct AdamConfig {
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

// Adam with bias correction. Parameters without an accumulated gradient are
// treated as having a zero gradient for that step (moments still decay).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  // Applies one update at the given learning rate, then clears gradients.
  void step(real lr);
  void zero_grad();
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real>> m_;
  std::vector<std::vector<real>> v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// Cosine annealing with warm restarts. Time is measured in epochs and may be
// fractional; each cycle decays base_lr -> min_lr along a half cosine, and
// the rate snaps back to base_lr at every restart.
struct CosineRestartSchedule {
  real base_lr = real(5e-4);
  real min_lr = real(0);
  double period = 50.0;  // first cycle length in epochs
  double t_mult = 1.0;   // cycle-length growth factor

  real lr_at(double t) const;
};

}  // namespace hynt
