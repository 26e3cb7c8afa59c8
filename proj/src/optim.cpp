#include "cusemo/optim.hpp"

#include <cmath>

#include "cusemo/common.hpp"

namespace cusemo::ad {

AdamState AdamState::init(const std::vector<Var>& params, double lr) {
  if (lr <= 0.0) throw ValidationError("learning rate must be positive");
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p->value.shape));
    s.v.push_back(Tensor::zeros(p->value.shape));
  }
  return s;
}

void adam_step(const std::vector<Var>& params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw ValidationError("optimizer state does not match the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& g = params[k]->grad;
    if (g.data.empty()) continue;
    for (double v : g.data) {
      if (!std::isfinite(v)) {
        throw RuntimeFailure("non-finite gradient in parameter '" + params[k]->name +
                             "' at step " + std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    auto& w = params[k]->value.data;
    const bool has_grad = !params[k]->grad.data.empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? params[k]->grad.data[i] : 0.0;
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      w[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double global_grad_norm(const std::vector<Var>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  if (max_norm <= 0.0) throw ValidationError("clip norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      for (double& g : p->grad.data) g *= scale;
    }
  }
  return norm;
}

}  // namespace cusemo::ad
