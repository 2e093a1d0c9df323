#include "degm/nn/mlp.hpp"

#include <cmath>

#include "degm/nn/errors.hpp"
#include "degm/nn/rng.hpp"

namespace degm::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw InvalidSpecError("unknown activation '" + name + "'");
}

Tensor apply_activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return nn::tanh(x);
    case Activation::relu: return nn::relu(x);
    case Activation::sigmoid: return nn::sigmoid(x);
  }
  return x;
}

Mlp::Mlp(std::vector<Linear> layers, std::vector<Activation> activations)
    : layers_(std::move(layers)), activations_(std::move(activations)) {
  if (layers_.empty()) throw InvalidSpecError("mlp needs at least one layer");
  if (activations_.size() != layers_.size()) {
    throw InvalidSpecError("mlp needs one activation per layer");
  }
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].fan_in() != layers_[i - 1].fan_out()) {
      throw ShapeError("mlp layer " + std::to_string(i) + " fan_in does not match previous fan_out");
    }
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  if (layers_.empty()) throw ContractError("forward on an empty mlp");
  const bool vector_input = x.rank() == 1;
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("mlp input must be [n, d] or [d], got " + shape_str(x.shape()));
  }
  const std::size_t last = x.shape().back();
  if (last != input_width()) {
    throw ShapeError("mlp input width " + std::to_string(last) + " != " +
                     std::to_string(input_width()));
  }
  Tensor h = vector_input ? reshape(x, Shape{1, last}) : x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = apply_activation(activations_[i],
                         add_row_vector(matmul(h, layers_[i].weight), layers_[i].bias));
  }
  return vector_input ? reshape(h, Shape{output_width()}) : h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  out.reserve(2 * layers_.size());
  for (const Linear& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Linear& l : layers_) n += l.weight.numel() + l.bias.numel();
  return n;
}

std::size_t Mlp::input_width() const { return layers_.front().fan_in(); }
std::size_t Mlp::output_width() const { return layers_.back().fan_out(); }

Mlp Mlp::clone() const {
  std::vector<Linear> copy;
  copy.reserve(layers_.size());
  for (const Linear& l : layers_) copy.push_back({l.weight.detach(), l.bias.detach()});
  return Mlp(std::move(copy), activations_);
}

void Mlp::set_trainable(bool on) {
  for (Linear& l : layers_) {
    l.weight.set_requires_grad(on);
    l.bias.set_requires_grad(on);
  }
}

Mlp build_mlp(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw InvalidSpecError("mlp spec needs at least two widths (input and output)");
  }
  for (std::size_t w : spec.layer_widths) {
    if (w == 0) throw InvalidSpecError("mlp widths must be positive");
  }
  const std::size_t n_layers = spec.layer_widths.size() - 1;
  if (spec.activations.size() != n_layers) {
    throw InvalidSpecError("mlp spec needs " + std::to_string(n_layers) + " activations, got " +
                           std::to_string(spec.activations.size()));
  }
  std::vector<Linear> layers;
  layers.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t fan_in = spec.layer_widths[i];
    const std::size_t fan_out = spec.layer_widths[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(spec.seed, "mlp/layer" + std::to_string(i));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    layers.push_back({Tensor(Shape{fan_in, fan_out}, std::move(w), true),
                      Tensor::zeros(Shape{fan_out}, true)});
  }
  return Mlp(std::move(layers), spec.activations);
}

}  // namespace degm::nn
