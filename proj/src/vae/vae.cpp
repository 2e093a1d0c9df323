#include "degm/vae/vae.hpp"

#include <cmath>

#include "degm/nn/errors.hpp"
#include "degm/nn/rng.hpp"

namespace degm::vae {

std::string to_string(Likelihood l) {
  switch (l) {
    case Likelihood::bernoulli:
      return "bernoulli";
    case Likelihood::gaussian_half:
      return "gaussian_half";
    case Likelihood::gaussian_identity:
      return "gaussian_identity";
  }
  return "unknown";
}

Likelihood likelihood_from_string(const std::string& name) {
  if (name == "bernoulli") return Likelihood::bernoulli;
  if (name == "gaussian_half") return Likelihood::gaussian_half;
  if (name == "gaussian_identity") return Likelihood::gaussian_identity;
  throw InvalidSpecError("unknown likelihood '" + name + "'");
}

void VaeArch::validate() const {
  if (data_dim == 0 || latent_dim == 0) throw InvalidSpecError("vae: zero data or latent width");
  if (encoder_hidden.empty() || decoder_hidden.empty()) {
    throw InvalidSpecError("vae: encoder and decoder need at least one hidden layer");
  }
  for (auto w : encoder_hidden)
    if (w == 0) throw InvalidSpecError("vae: zero encoder width");
  for (auto w : decoder_hidden)
    if (w == 0) throw InvalidSpecError("vae: zero decoder width");
  if (trunk_width() <= latent_dim) {
    throw InvalidSpecError("vae: encoder trunk width must exceed latent_dim");
  }
  if (decoder_width() >= data_dim) {
    throw InvalidSpecError("vae: decoder trunk width must be below data_dim");
  }
  if (!(observation.pixel_scale > 0.0) || !std::isfinite(observation.pixel_scale)) {
    throw InvalidSpecError("vae: pixel_scale must be positive and finite");
  }
}

bool operator==(const VaeArch& a, const VaeArch& b) {
  return a.data_dim == b.data_dim && a.encoder_hidden == b.encoder_hidden &&
         a.latent_dim == b.latent_dim && a.decoder_hidden == b.decoder_hidden &&
         a.observation.likelihood == b.observation.likelihood &&
         a.observation.normalize == b.observation.normalize &&
         a.observation.pixel_scale == b.observation.pixel_scale;
}

VaeModel::VaeModel(VaeArch arch, nn::Mlp encoder_trunk, nn::Mlp mean_head, nn::Mlp logvar_head,
                   nn::Mlp decoder_trunk, nn::Mlp decoder_out)
    : arch_(std::move(arch)),
      encoder_trunk_(std::move(encoder_trunk)),
      mean_head_(std::move(mean_head)),
      logvar_head_(std::move(logvar_head)),
      decoder_trunk_(std::move(decoder_trunk)),
      decoder_out_(std::move(decoder_out)) {
  if (encoder_trunk_.input_width() != arch_.data_dim ||
      encoder_trunk_.output_width() != mean_head_.input_width() ||
      mean_head_.input_width() != logvar_head_.input_width() ||
      mean_head_.output_width() != arch_.latent_dim ||
      logvar_head_.output_width() != arch_.latent_dim ||
      decoder_trunk_.input_width() != arch_.latent_dim ||
      decoder_trunk_.output_width() != decoder_out_.input_width() ||
      decoder_out_.output_width() != arch_.data_dim) {
    throw ShapeError("VaeModel: sub-network widths do not chain");
  }
}

Posterior VaeModel::posterior(const nn::Tensor& x) const {
  const nn::Tensor h = encoder_trunk_.forward(x);
  return {mean_head_.forward(h), logvar_head_.forward(h)};
}

nn::Tensor VaeModel::decode(const nn::Tensor& z) const {
  return decoder_out_.forward(decoder_trunk_.forward(z));
}

std::vector<nn::Tensor> VaeModel::parameters() const {
  std::vector<nn::Tensor> out;
  for (const nn::Mlp* m : {&encoder_trunk_, &mean_head_, &logvar_head_, &decoder_trunk_, &decoder_out_}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Tensor> VaeModel::trainable_parameters() const {
  std::vector<nn::Tensor> out;
  for (auto& p : parameters())
    if (p.requires_grad()) out.push_back(p);
  return out;
}

std::size_t VaeModel::parameter_count() const {
  return encoder_trunk_.parameter_count() + mean_head_.parameter_count() +
         logvar_head_.parameter_count() + decoder_trunk_.parameter_count() +
         decoder_out_.parameter_count();
}

nn::Tensor VaeModel::reconstruct(const nn::Tensor& x) const { return decode(posterior(x).mu); }

VaeModel VaeModel::clone() const {
  return VaeModel(arch_, encoder_trunk_.clone(), mean_head_.clone(), logvar_head_.clone(),
                  decoder_trunk_.clone(), decoder_out_.clone());
}

void VaeModel::set_trainable(bool on) {
  for (nn::Mlp* m : {&encoder_trunk_, &mean_head_, &logvar_head_, &decoder_trunk_, &decoder_out_}) {
    m->set_trainable(on);
  }
}

nn::Activation output_activation(Likelihood l) {
  return l == Likelihood::bernoulli ? nn::Activation::sigmoid : nn::Activation::identity;
}

nn::MlpSpec stack_spec(std::vector<std::size_t> widths, nn::Activation last, std::uint64_t seed) {
  nn::MlpSpec spec;
  spec.layer_widths = std::move(widths);
  spec.activations.assign(spec.layer_widths.size() - 1, nn::Activation::tanh);
  spec.activations.back() = last;
  spec.seed = seed;
  return spec;
}

std::uint64_t part_seed(std::uint64_t seed, const std::string& label) {
  return nn::Rng(seed, label).next_u64();
}

VaeModel build_vae(const VaeArch& arch, std::uint64_t seed, const std::string& label) {
  arch.validate();
  std::vector<std::size_t> enc{arch.data_dim};
  enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  std::vector<std::size_t> dec{arch.latent_dim};
  dec.insert(dec.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
  const auto tanh = nn::Activation::tanh, ident = nn::Activation::identity;
  return VaeModel(
      arch, nn::build_mlp(stack_spec(enc, tanh, part_seed(seed, label + "/encoder_trunk"))),
      nn::build_mlp(stack_spec({arch.trunk_width(), arch.latent_dim}, ident,
                               part_seed(seed, label + "/mean_head"))),
      nn::build_mlp(stack_spec({arch.trunk_width(), arch.latent_dim}, ident,
                               part_seed(seed, label + "/logvar_head"))),
      nn::build_mlp(stack_spec(dec, tanh, part_seed(seed, label + "/decoder_trunk"))),
      nn::build_mlp(stack_spec({arch.decoder_width(), arch.data_dim},
                               output_activation(arch.observation.likelihood),
                               part_seed(seed, label + "/decoder_out"))));
}

}  // namespace degm::vae
