#include "degm/graph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "degm/nn/errors.hpp"
#include "degm/vae/objectives.hpp"

namespace degm::graph {

using nn::Tensor;

std::string to_string(NodeKind k) { return k == NodeKind::basic ? "basic" : "specific"; }
std::string to_string(Decision d) { return d == Decision::basic ? "basic" : "specific"; }

std::vector<Tensor> SpecificNode::parameters() const {
  std::vector<Tensor> out;
  for (const nn::Mlp* m : {&mean_head, &logvar_head, &decoder_out}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::size_t SpecificNode::parameter_count() const {
  return mean_head.parameter_count() + logvar_head.parameter_count() + decoder_out.parameter_count();
}

void SpecificNode::set_trainable(bool on) {
  mean_head.set_trainable(on);
  logvar_head.set_trainable(on);
  decoder_out.set_trainable(on);
}

SpecificNode SpecificNode::clone() const {
  return {id, task_id, mean_head.clone(), logvar_head.clone(), decoder_out.clone(), pi};
}

GraphState::GraphState(vae::VaeArch arch) : arch_(std::move(arch)) { arch_.validate(); }

NodeKind GraphState::kind(std::size_t id) const {
  if (id >= kinds_.size()) throw ContractError("graph: no node " + std::to_string(id));
  return kinds_[id];
}

const BasicNode& GraphState::basic(std::size_t id) const {
  if (kind(id) != NodeKind::basic) throw ContractError("graph: node " + std::to_string(id) + " is not basic");
  return basic_[slot_[id]];
}

const SpecificNode& GraphState::specific(std::size_t id) const {
  if (kind(id) != NodeKind::specific) {
    throw ContractError("graph: node " + std::to_string(id) + " is not specific");
  }
  return specific_[slot_[id]];
}

int GraphState::task_of(std::size_t id) const {
  return kind(id) == NodeKind::basic ? basic(id).task_id : specific(id).task_id;
}

std::vector<double> GraphState::adjacency() const {
  const std::size_t t = node_count();
  std::vector<double> v(t * t, 0.0);
  for (const auto& s : specific_) {
    for (std::size_t i = 0; i < s.pi.size(); ++i) v[s.id * t + basic_[i].id] = s.pi[i];
  }
  return v;
}

BasicNode& GraphState::add_basic(BasicNode node) {
  if (!(node.model.arch() == arch_)) throw ContractError("graph: basic node architecture differs from the graph");
  node.id = node_count();
  kinds_.push_back(NodeKind::basic);
  slot_.push_back(basic_.size());
  basic_.push_back(std::move(node));
  return basic_.back();
}

SpecificNode& GraphState::add_specific(SpecificNode node) {
  if (node.pi.empty() || node.pi.size() > basic_.size()) {
    throw ContractError("graph: specific node weights must cover 1.." + std::to_string(basic_.size()) +
                        " basic nodes, got " + std::to_string(node.pi.size()));
  }
  node.id = node_count();
  kinds_.push_back(NodeKind::specific);
  slot_.push_back(specific_.size());
  specific_.push_back(std::move(node));
  return specific_.back();
}

void GraphState::record(ExpansionRecord r) { log_.push_back(std::move(r)); }

std::vector<double> knowledge_novelty(const GraphState& graph, const Tensor& probe, const nn::Rng& rng) {
  if (graph.basic_nodes().empty()) throw ContractError("knowledge_novelty: the graph has no basic node");
  if (probe.numel() == 0) throw std::invalid_argument("knowledge_novelty: empty probe");
  nn::NoGradGuard guard;
  const Tensor noise = vae::keyed_noise(probe, 1, graph.arch().latent_dim, rng);
  std::vector<double> ks;
  for (const auto& b : graph.basic_nodes()) {
    const double mean_elbo = vae::elbo(b.model, probe, 1, noise).total;
    ks.push_back(std::abs(b.best_elbo - mean_elbo));
  }
  return ks;
}

Tensor novelty_probe(const Tensor& train, std::size_t limit) {
  if (limit == 0) throw std::invalid_argument("novelty_probe: limit must be positive");
  return train.slice_rows(0, std::min(limit, train.rows()));
}

Decision expansion_decision(const std::vector<double>& ks, double tau, Override ov) {
  if (ov == Override::force_basic) return Decision::basic;
  if (ks.empty()) return Decision::basic;
  if (ov == Override::force_specific) return Decision::specific;
  return *std::min_element(ks.begin(), ks.end()) > tau ? Decision::basic : Decision::specific;
}

std::vector<double> importance_weights(const std::vector<double>& ks) {
  if (ks.empty()) throw std::invalid_argument("importance_weights: empty ks");
  for (double k : ks) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("importance_weights: ks must be finite and >= 0");
  }
  const std::size_t n = ks.size();
  if (n == 1) return {1.0};
  const double w = std::accumulate(ks.begin(), ks.end(), 0.0);
  const double denom = static_cast<double>(n) * w - w;
  if (!(denom > 0.0) || std::all_of(ks.begin(), ks.end(), [&](double k) { return k == ks.front(); })) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = (w - ks[i]) / denom;
  return pi;
}

BasicNode& build_basic_node(GraphState& graph, int task_id, std::uint64_t seed, const std::string& label) {
  BasicNode node;
  node.task_id = task_id;
  node.model = vae::build_vae(graph.arch(), seed, label);
  return graph.add_basic(std::move(node));
}

SpecificNode& build_specific_node(GraphState& graph, int task_id, std::vector<double> pi, std::uint64_t seed,
                                  const std::string& label) {
  if (pi.size() != graph.basic_nodes().size()) {
    throw ContractError("build_specific_node: " + std::to_string(pi.size()) + " weights for " +
                        std::to_string(graph.basic_nodes().size()) + " basic nodes");
  }
  double sum = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0)) throw ContractError("build_specific_node: negative weight");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ContractError("build_specific_node: weights do not sum to 1");
  const vae::VaeArch& a = graph.arch();
  const auto ident = nn::Activation::identity;
  SpecificNode node{
      0,
      task_id,
      nn::build_mlp(vae::stack_spec({a.trunk_width(), a.latent_dim}, ident, vae::part_seed(seed, label + "/mean_head"))),
      nn::build_mlp(
          vae::stack_spec({a.trunk_width(), a.latent_dim}, ident, vae::part_seed(seed, label + "/logvar_head"))),
      nn::build_mlp(vae::stack_spec({a.decoder_width(), a.data_dim}, vae::output_activation(a.observation.likelihood),
                                    vae::part_seed(seed, label + "/decoder_out"))),
      std::move(pi)};
  return graph.add_specific(std::move(node));
}

}  // namespace degm::graph
