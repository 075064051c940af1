#include "dmicf/adam.hpp"

#include <cmath>
#include <string>

namespace dmicf {

void adam_step(AdamState& state, std::span<Tensor2* const> params,
               std::span<const Tensor2> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Tensor2* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " is " +
                           params[i]->shape_string() + ", gradient " +
                           grads[i].shape_string() + ", moment " +
                           state.first_moment[i].shape_string());
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data();
    const auto& g = grads[i].data();
    auto& m = state.first_moment[i].data();
    auto& v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace dmicf
