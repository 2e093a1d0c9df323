#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "degm/nn/tensor.hpp"

namespace degm::nn {

enum class Activation { identity, tanh, relu, sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);
Tensor apply_activation(Activation a, const Tensor& x);

struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  /// One entry per layer (layer_widths.size() - 1), applied after that layer.
  std::vector<Activation> activations;
  std::uint64_t seed = 0;
};

/// Fully connected layer computing x W + b, W stored [fan_in, fan_out].
struct Linear {
  Tensor weight;
  Tensor bias;

  [[nodiscard]] std::size_t fan_in() const { return weight.shape()[0]; }
  [[nodiscard]] std::size_t fan_out() const { return weight.shape()[1]; }
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<Linear> layers, std::vector<Activation> activations);

  /// Input [n, in] or [in]; output keeps the input's rank.
  [[nodiscard]] Tensor forward(const Tensor& x) const;

  /// Weights and biases in layer order: W0, b0, W1, b1, ...
  [[nodiscard]] std::vector<Tensor> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] const std::vector<Linear>& layers() const { return layers_; }
  [[nodiscard]] const std::vector<Activation>& activations() const { return activations_; }
  [[nodiscard]] std::size_t input_width() const;
  [[nodiscard]] std::size_t output_width() const;

  /// Deep copy with independent storage and no gradient tracking.
  [[nodiscard]] Mlp clone() const;
  void set_trainable(bool on);

 private:
  std::vector<Linear> layers_;
  std::vector<Activation> activations_;
};

/// Weights ~ U[-s, s], s = sqrt(6 / (fan_in + fan_out)); biases zero.
/// Layer i draws from the stream (seed, "mlp/layer{i}").
Mlp build_mlp(const MlpSpec& spec);

}  // namespace degm::nn
