#pragma once

#include <cstdint>
#include <vector>

#include "degm/nn/tensor.hpp"

namespace degm::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::uint64_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  AdamHyper hyper;
};

/// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
/// Moments are laid out in parameter order, flattened.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamHyper hyper = {});

  /// Applies one update from the current gradients; throws ContractError if a
  /// parameter has no gradient.
  void step();
  void zero_grad();

  [[nodiscard]] const OptimizerState& state() const { return state_; }
  [[nodiscard]] const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimizerState state_;
};

}  // namespace degm::nn
