#pragma once

#include <vector>

#include "promptmr/autograd.hpp"
#include "promptmr/config.hpp"

namespace promptmr {

/// Adam with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class AdamW {
 public:
  AdamW(std::vector<ag::Var> params, const OptimConfig& cfg);

  /// One update from the gradients currently stored on the parameters.
  /// Returns the global gradient norm before clipping.
  double step(double lr);
  void zero_grad();

  long steps() const { return t_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  std::vector<ag::Var> params_;
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace promptmr
