#include "degm/graph/specific.hpp"

#include <cmath>
#include <stdexcept>

#include "degm/nn/errors.hpp"

namespace degm::graph {

using nn::Shape;
using nn::Tensor;

namespace {

Tensor as_matrix(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 1) return reshape(x, Shape{1, x.numel()});
  throw ShapeError("expected a batch [n, d] or a single example [d], got " + nn::shape_str(x.shape()));
}

std::size_t example_count(const Tensor& x) { return x.rank() == 1 ? 1 : x.rows(); }

Tensor repeat_entries(const Tensor& v, std::size_t k) {
  const std::size_t n = v.numel();
  return reshape(repeat_rows(reshape(v, Shape{n, 1}), k), Shape{n * k});
}

void check_node(const SpecificNode& node, const GraphState& graph) {
  if (node.pi.empty() || node.pi.size() > graph.basic_nodes().size()) {
    throw ContractError("specific node: " + std::to_string(node.pi.size()) + " weights for " +
                        std::to_string(graph.basic_nodes().size()) + " basic nodes");
  }
}

/// sum_i pi_i g~_i(z) followed by the node's output layer.
Tensor decode_path(const SpecificNode& node, const GraphState& graph, const Tensor& z) {
  Tensor mixed;
  for (std::size_t i = 0; i < node.pi.size(); ++i) {
    const Tensor part = scale(graph.basic_nodes()[i].model.decoder_trunk().forward(z), node.pi[i]);
    mixed = i == 0 ? part : add(mixed, part);
  }
  return node.decoder_out.forward(mixed);
}

std::vector<vae::Posterior> encode_branches(const SpecificNode& node, const GraphState& graph, const Tensor& x) {
  std::vector<vae::Posterior> out;
  out.reserve(node.pi.size());
  for (std::size_t i = 0; i < node.pi.size(); ++i) {
    const Tensor h = graph.basic_nodes()[i].model.encoder_trunk().forward(x);
    out.push_back({node.mean_head.forward(h), node.logvar_head.forward(h)});
  }
  return out;
}

/// Law of sum_i pi_i z_i for independent z_i ~ q_i.
vae::Posterior effective_posterior(const std::vector<vae::Posterior>& branches, const std::vector<double>& pi) {
  Tensor mu, var;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const Tensor m = scale(branches[i].mu, pi[i]);
    const Tensor v = scale(exp(branches[i].logvar), pi[i] * pi[i]);
    mu = i == 0 ? m : add(mu, m);
    var = i == 0 ? v : add(var, v);
  }
  return {mu, log(var)};
}

/// Weighted analytic KL per row, [n].
Tensor weighted_kl_rows(const std::vector<vae::Posterior>& branches, const std::vector<double>& pi) {
  Tensor kl;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const Tensor part = scale(vae::gaussian_kl_rows(branches[i].mu, branches[i].logvar), pi[i]);
    kl = i == 0 ? part : add(kl, part);
  }
  return kl;
}

}  // namespace

SpecificForward specific_forward(const SpecificNode& node, const GraphState& graph, const Tensor& x_in,
                                 std::size_t k, const std::vector<Tensor>& noise) {
  check_node(node, graph);
  if (k == 0) throw std::invalid_argument("specific_forward: sample count must be positive");
  const Tensor x = as_matrix(x_in);
  if (x.cols() != graph.arch().data_dim) {
    throw ShapeError("specific_forward: data width " + std::to_string(x.cols()) + " does not match model width " +
                     std::to_string(graph.arch().data_dim));
  }
  if (noise.size() != node.pi.size()) {
    throw ShapeError("specific_forward: " + std::to_string(noise.size()) + " noise blocks for " +
                     std::to_string(node.pi.size()) + " branches");
  }
  SpecificForward f;
  f.branches = encode_branches(node, graph, x);
  for (std::size_t i = 0; i < node.pi.size(); ++i) {
    const auto& b = f.branches[i];
    const Tensor zi = scale(vae::reparameterize(repeat_rows(b.mu, k), repeat_rows(b.logvar, k), noise[i]), node.pi[i]);
    f.z = i == 0 ? zi : add(f.z, zi);
  }
  f.output = decode_path(node, graph, f.z);
  return f;
}

std::vector<Tensor> draw_branch_noise(nn::Rng& rng, std::size_t branches, std::size_t rows, std::size_t cols) {
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < branches; ++b) out.push_back(vae::draw_noise(rng, rows, cols));
  return out;
}

std::vector<Tensor> keyed_branch_noise(const Tensor& x, std::size_t branches, std::size_t k, std::size_t cols,
                                       const nn::Rng& base) {
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < branches; ++b) out.push_back(vae::keyed_noise(x, k, cols, base.child("branch", b)));
  return out;
}

vae::ElboEstimate melbo(const SpecificNode& node, const GraphState& graph, const Tensor& x_in, std::size_t k,
                        const std::vector<Tensor>& noise) {
  const SpecificForward f = specific_forward(node, graph, x_in, k, noise);
  const Tensor x = as_matrix(x_in);
  const std::size_t n = x.rows();
  const Tensor recon = vae::recon_loglik_rows(f.output, repeat_rows(x, k), graph.arch().observation);
  const Tensor kl = weighted_kl_rows(f.branches, node.pi);
  const Tensor recon_ex = row_mean(reshape(recon, Shape{n, k}));
  const Tensor mean_recon = mean(recon);
  const Tensor mean_kl = mean(kl);

  vae::ElboEstimate e;
  e.objective = sub(mean_recon, mean_kl);
  e.total = e.objective.item();
  e.recon_term = mean_recon.item();
  e.kl_term = mean_kl.item();
  e.k_prime = k;
  e.n_data = n;
  e.per_example.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.per_example[i] = recon_ex.at(i) - kl.at(i);
  return e;
}

vae::ElboEstimate melbo(const SpecificNode& node, const GraphState& graph, const Tensor& x, std::size_t k,
                        nn::Rng& rng) {
  if (k == 0) throw std::invalid_argument("melbo: sample count must be positive");
  return melbo(node, graph, x, k, draw_branch_noise(rng, node.pi.size(), example_count(x) * k, graph.arch().latent_dim));
}

vae::ElboEstimate iw_melbo(const SpecificNode& node, const GraphState& graph, const Tensor& x_in,
                           std::size_t k_prime, const std::vector<Tensor>& noise) {
  const SpecificForward f = specific_forward(node, graph, x_in, k_prime, noise);
  const Tensor x = as_matrix(x_in);
  const std::size_t n = x.rows(), k = k_prime;
  const Tensor recon = vae::recon_loglik_rows(f.output, repeat_rows(x, k), graph.arch().observation);
  const Tensor kl = weighted_kl_rows(f.branches, node.pi);
  const vae::Posterior q = effective_posterior(f.branches, node.pi);
  const Tensor lv = repeat_rows(q.logvar, k);
  const Tensor eps = mul(sub(f.z, repeat_rows(q.mu, k)), exp(scale(lv, -0.5)));
  // log p(z) - log q(z|x); normalizers cancel.
  const Tensor ratio = scale(row_sum(add(sub(lv, square(f.z)), square(eps))), 0.5);
  const Tensor ratio_mean = row_mean(reshape(ratio, Shape{n, k}));
  const Tensor w = add(sub(recon, repeat_entries(kl, k)), sub(ratio, repeat_entries(ratio_mean, k)));
  const Tensor bound = add_scalar(row_logsumexp(reshape(w, Shape{n, k})), -std::log(static_cast<double>(k)));
  const Tensor base = sub(row_mean(reshape(recon, Shape{n, k})), kl);
  const Tensor mean_recon = mean(recon);
  const Tensor mean_kl = mean(kl);

  vae::ElboEstimate e;
  e.objective = add(sub(mean_recon, mean_kl), mean(sub(bound, base)));
  e.total = e.objective.item();
  e.recon_term = mean_recon.item();
  e.kl_term = mean_kl.item();
  e.k_prime = k;
  e.n_data = n;
  e.per_example.assign(bound.data().begin(), bound.data().end());
  return e;
}

vae::ElboEstimate iw_melbo(const SpecificNode& node, const GraphState& graph, const Tensor& x,
                           std::size_t k_prime, nn::Rng& rng) {
  if (k_prime == 0) throw std::invalid_argument("iw_melbo: k_prime must be positive");
  return iw_melbo(node, graph, x, k_prime,
                  draw_branch_noise(rng, node.pi.size(), example_count(x) * k_prime, graph.arch().latent_dim));
}

SpecificPath::SpecificPath(const SpecificNode& node, const GraphState& graph) : node_(&node), graph_(&graph) {
  check_node(node, graph);
}

vae::Posterior SpecificPath::posterior(const Tensor& x) const {
  return effective_posterior(encode_branches(*node_, *graph_, as_matrix(x)), node_->pi);
}

Tensor SpecificPath::decode(const Tensor& z) const { return decode_path(*node_, *graph_, z); }

}  // namespace degm::graph
