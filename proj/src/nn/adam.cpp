#include "degm/nn/adam.hpp"

#include <cmath>
#include <string>

#include "degm/nn/errors.hpp"

namespace degm::nn {

Adam::Adam(std::vector<Tensor> params, AdamHyper hyper) : params_(std::move(params)) {
  if (!(hyper.beta1 > 0.0 && hyper.beta1 < 1.0) || !(hyper.beta2 > 0.0 && hyper.beta2 < 1.0) ||
      !(hyper.epsilon > 0.0) || !(hyper.learning_rate > 0.0)) {
    throw InvalidSpecError("adam: need 0 < beta1, beta2 < 1, epsilon > 0 and learning_rate > 0");
  }
  std::size_t total = 0;
  for (const Tensor& p : params_) total += p.numel();
  state_.first_moment.assign(total, 0.0);
  state_.second_moment.assign(total, 0.0);
  state_.hyper = hyper;
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  const AdamHyper& h = state_.hyper;
  ++state_.step_count;
  const double t = static_cast<double>(state_.step_count);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);

  std::size_t offset = 0;
  for (Tensor& p : params_) {
    auto values = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      double& m = state_.first_moment[offset + j];
      double& v = state_.second_moment[offset + j];
      m = h.beta1 * m + (1.0 - h.beta1) * g[j];
      v = h.beta2 * v + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      values[j] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
    offset += values.size();
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace degm::nn
