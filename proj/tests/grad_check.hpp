#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hynt/tensor.hpp"

namespace hynt::testutil {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central finite-difference check of reverse-mode gradients. loss_fn must
// rebuild its graph from the parameters' current values on every call and be
// deterministic (re-seed any dropout rng inside the closure). Relative error
// uses a small denominator floor so near-zero gradients are compared
// absolutely at ~1e-7 resolution.
inline GradCheckResult check_gradients(const std::vector<std::pair<std::string, Tensor>>& params,
                                       const std::function<Tensor()>& loss_fn,
                                       double step = 1e-4) {
  for (const auto& [name, p] : params) {
    Tensor copy = p;
    copy.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<real>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<real>(p.size(), real(0)));
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const real original = p.raw_values()[i];
      p.raw_values()[i] = original + static_cast<real>(step);
      const double loss_plus = static_cast<double>(loss_fn().scalar());
      p.raw_values()[i] = original - static_cast<real>(step);
      const double loss_minus = static_cast<double>(loss_fn().scalar());
      p.raw_values()[i] = original;
      const double numeric = (loss_plus - loss_minus) / (2.0 * step);
      const double an = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(numeric), std::abs(an), 1e-3});
      const double rel = std::abs(numeric - an) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = params[pi].first;
        result.worst_index = static_cast<int>(i);
        result.analytic_at_worst = an;
        result.numeric_at_worst = numeric;
      }
    }
  }
  return result;
}

}  // namespace hynt::testutil
