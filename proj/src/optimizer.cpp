#include "lasvad/optimizer.hpp"

#include <cmath>

#include "lasvad/error.hpp"

namespace lasvad {

void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t step,
                  const AdamWOptions& o) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols() || m.rows() != param.rows() ||
      m.cols() != param.cols() || v.rows() != param.rows() || v.cols() != param.cols()) {
    throw ArgumentError("adamw_update: shape mismatch");
  }
  if (step < 1) throw ArgumentError("adamw_update: step must be >= 1");
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  param *= 1.0 - o.learning_rate * o.weight_decay;
  param.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
}

void adamw_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, AdamWState& state,
                const AdamWOptions& options) {
  if (params.size() != grads.size()) throw ArgumentError("adamw_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ArgumentError("adamw_step: optimizer state does not match parameters");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adamw_update(*params[i], grads[i], state.m[i], state.v[i], state.step, options);
  }
}

}  // namespace lasvad
