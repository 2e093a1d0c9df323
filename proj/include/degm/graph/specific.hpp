#pragma once

#include <cstddef>
#include <vector>

#include "degm/graph/graph.hpp"
#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/objectives.hpp"
#include "degm/vae/vae.hpp"

namespace degm::graph {

struct SpecificForward {
  /// sum_i pi_i z_i, [n * k, L], example-major.
  nn::Tensor z;
  /// Heads of the node over each Basic trunk, [n, L] each.
  std::vector<vae::Posterior> branches;
  /// g'(sum_i pi_i g~_i(z)), [n * k, d].
  nn::Tensor output;
};

/// Branch i encodes through Basic node i's trunk and the node's heads and
/// samples z_i = mu_i + sigma_i * noise[i] (noise[i] is [n * k, L]). Basic
/// parameters take part in the graph but are expected to be frozen.
SpecificForward specific_forward(const SpecificNode& node, const GraphState& graph, const nn::Tensor& x,
                                 std::size_t k, const std::vector<nn::Tensor>& noise);

/// One [n * k, L] noise block per branch, drawn in branch order.
std::vector<nn::Tensor> draw_branch_noise(nn::Rng& rng, std::size_t branches, std::size_t rows, std::size_t cols);
/// Content-keyed branch noise; branch b uses base.child("branch", b).
std::vector<nn::Tensor> keyed_branch_noise(const nn::Tensor& x, std::size_t branches, std::size_t k,
                                           std::size_t cols, const nn::Rng& base);

/// Mixture bound: mean recon of specific_forward minus sum_i pi_i KL(q_i || p).
/// kl_term is the weighted KL.
vae::ElboEstimate melbo(const SpecificNode& node, const GraphState& graph, const nn::Tensor& x, std::size_t k,
                        const std::vector<nn::Tensor>& noise);
vae::ElboEstimate melbo(const SpecificNode& node, const GraphState& graph, const nn::Tensor& x, std::size_t k,
                        nn::Rng& rng);

/// Importance-weighted mixture bound. z = sum_i pi_i z_i has law
/// q(z|x) = N(sum_i pi_i mu_i, sum_i pi_i^2 sigma_i^2); with l_k = log p(z_k) - log q(z_k|x)
/// each example contributes log (1/K') sum_k exp(r_k - sum_i pi_i KL_i + l_k - mean_j l_j).
/// Equals melbo at K' = 1 under the same noise.
vae::ElboEstimate iw_melbo(const SpecificNode& node, const GraphState& graph, const nn::Tensor& x,
                           std::size_t k_prime, const std::vector<nn::Tensor>& noise);
vae::ElboEstimate iw_melbo(const SpecificNode& node, const GraphState& graph, const nn::Tensor& x,
                           std::size_t k_prime, nn::Rng& rng);

/// The generative path of a Specific node as a single latent-variable model:
/// posterior is the exact law of sum_i pi_i z_i, decode is g'(sum_i pi_i g~_i(z)).
/// Holds references; the node and graph must outlive it.
class SpecificPath : public vae::LatentVariableModel {
 public:
  SpecificPath(const SpecificNode& node, const GraphState& graph);

  [[nodiscard]] vae::Posterior posterior(const nn::Tensor& x) const override;
  [[nodiscard]] nn::Tensor decode(const nn::Tensor& z) const override;
  [[nodiscard]] const vae::VaeArch& arch() const override { return graph_->arch(); }
  [[nodiscard]] std::vector<nn::Tensor> trainable_parameters() const override { return node_->parameters(); }

 private:
  const SpecificNode* node_;
  const GraphState* graph_;
};

}  // namespace degm::graph
