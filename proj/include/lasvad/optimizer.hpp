#pragma once

// Adam with decoupled weight decay.

#include <cstdint>
#include <vector>

#include "lasvad/autodiff.hpp"

namespace lasvad {

struct AdamWOptions {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One moment pair per parameter tensor, in the model's parameter order.
struct AdamWState {
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// In-place update of one tensor; `step` is the 1-based step used for bias correction.
//   p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t step,
                  const AdamWOptions& options);

// Advances state.step once and updates every tensor. Moments are created at
// zero on first use.
void adamw_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, AdamWState& state,
                const AdamWOptions& options);

}  // namespace lasvad
