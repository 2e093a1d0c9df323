#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "degm/nn/mlp.hpp"
#include "degm/nn/tensor.hpp"

namespace degm::vae {

enum class Likelihood { bernoulli, gaussian_half, gaussian_identity };

std::string to_string(Likelihood l);
Likelihood likelihood_from_string(const std::string& name);

/// Observation model p(x|z) given the decoder output.
struct ObservationModel {
  Likelihood likelihood = Likelihood::bernoulli;
  /// Divide the reconstruction log-likelihood by the data dimension.
  bool normalize = false;
  /// Gaussian likelihoods compare s x with s y, as for data stored on [0, s].
  /// Must be positive; bernoulli ignores it.
  double pixel_scale = 1.0;
};

struct VaeArch {
  std::size_t data_dim = 144;
  std::vector<std::size_t> encoder_hidden{128};
  std::size_t latent_dim = 16;
  std::vector<std::size_t> decoder_hidden{128};
  ObservationModel observation;

  /// Width of the encoder trunk output (Z~).
  [[nodiscard]] std::size_t trunk_width() const { return encoder_hidden.back(); }
  /// Width of the decoder trunk output (X~).
  [[nodiscard]] std::size_t decoder_width() const { return decoder_hidden.back(); }
  /// Throws InvalidSpecError unless every width is positive, both hidden
  /// stacks are non-empty, trunk_width() > latent_dim and decoder_width() < data_dim.
  void validate() const;
};

bool operator==(const VaeArch& a, const VaeArch& b);

/// Diagonal Gaussian q(z|x) parameterized by mean and log-variance, [n, L] each.
struct Posterior {
  nn::Tensor mu;
  nn::Tensor logvar;
};

/// Anything with an amortized Gaussian posterior over a standard-normal prior
/// and a deterministic decoder mean.
class LatentVariableModel {
 public:
  virtual ~LatentVariableModel() = default;
  [[nodiscard]] virtual Posterior posterior(const nn::Tensor& x) const = 0;
  /// Decoder mean (probabilities for bernoulli), [n, d].
  [[nodiscard]] virtual nn::Tensor decode(const nn::Tensor& z) const = 0;
  [[nodiscard]] virtual const VaeArch& arch() const = 0;
  /// Parameters that receive gradients when this model is trained.
  [[nodiscard]] virtual std::vector<nn::Tensor> trainable_parameters() const = 0;
};

/// Encoder: trunk (X -> Z~, tanh) followed by mean and log-variance heads
/// (Z~ -> Z, identity). Decoder: trunk (Z -> X~, tanh) followed by an output
/// layer (X~ -> X, sigmoid for bernoulli, identity otherwise).
class VaeModel : public LatentVariableModel {
 public:
  VaeModel() = default;
  VaeModel(VaeArch arch, nn::Mlp encoder_trunk, nn::Mlp mean_head, nn::Mlp logvar_head,
           nn::Mlp decoder_trunk, nn::Mlp decoder_out);

  [[nodiscard]] Posterior posterior(const nn::Tensor& x) const override;
  [[nodiscard]] nn::Tensor decode(const nn::Tensor& z) const override;
  [[nodiscard]] const VaeArch& arch() const override { return arch_; }
  [[nodiscard]] std::vector<nn::Tensor> trainable_parameters() const override;

  /// Every parameter in the fixed order encoder_trunk, mean_head, logvar_head,
  /// decoder_trunk, decoder_out.
  [[nodiscard]] std::vector<nn::Tensor> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;

  /// Deterministic reconstruction decode(mu(x)).
  [[nodiscard]] nn::Tensor reconstruct(const nn::Tensor& x) const;

  [[nodiscard]] const nn::Mlp& encoder_trunk() const { return encoder_trunk_; }
  [[nodiscard]] const nn::Mlp& mean_head() const { return mean_head_; }
  [[nodiscard]] const nn::Mlp& logvar_head() const { return logvar_head_; }
  [[nodiscard]] const nn::Mlp& decoder_trunk() const { return decoder_trunk_; }
  [[nodiscard]] const nn::Mlp& decoder_out() const { return decoder_out_; }

  [[nodiscard]] VaeModel clone() const;
  void set_trainable(bool on);

 private:
  VaeArch arch_;
  nn::Mlp encoder_trunk_;
  nn::Mlp mean_head_;
  nn::Mlp logvar_head_;
  nn::Mlp decoder_trunk_;
  nn::Mlp decoder_out_;
};

/// Hidden layers use tanh. Each sub-network draws its initialization from a
/// stream keyed by (seed, "<label>/<part>").
VaeModel build_vae(const VaeArch& arch, std::uint64_t seed, const std::string& label = "vae");

/// Activation of the decoder output layer for a likelihood.
nn::Activation output_activation(Likelihood l);

/// Mlp spec for widths with tanh everywhere except the last layer.
nn::MlpSpec stack_spec(std::vector<std::size_t> widths, nn::Activation last, std::uint64_t seed);

/// Seed for a named sub-network, derived from the run seed.
std::uint64_t part_seed(std::uint64_t seed, const std::string& label);

}  // namespace degm::vae
