#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "degm/nn/mlp.hpp"
#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/vae.hpp"

namespace degm::graph {

enum class NodeKind : std::uint8_t { basic = 0, specific = 1 };

std::string to_string(NodeKind k);

/// A full VAE whose four sub-models (encoder trunk, mean/log-variance heads,
/// decoder trunk, decoder output) are reused by later Specific nodes.
struct BasicNode {
  std::size_t id = 0;
  int task_id = 0;
  vae::VaeModel model;
  /// Running maximum of the per-epoch mean training ELBO on the node's task.
  double best_elbo = 0.0;
};

/// New mean/log-variance heads over the shared trunk width and a new decoder
/// output layer; the trunks come from the Basic nodes weighted by pi.
struct SpecificNode {
  std::size_t id = 0;
  int task_id = 0;
  nn::Mlp mean_head;
  nn::Mlp logvar_head;
  nn::Mlp decoder_out;
  /// Weights over the first pi.size() Basic nodes, on the simplex.
  std::vector<double> pi;

  [[nodiscard]] std::vector<nn::Tensor> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;
  void set_trainable(bool on);
  [[nodiscard]] SpecificNode clone() const;
};

enum class Decision : std::uint8_t { basic = 0, specific = 1 };
enum class Override : std::uint8_t { none, force_basic, force_specific };

std::string to_string(Decision d);

struct ExpansionRecord {
  int task_id = 0;
  Decision decision = Decision::basic;
  /// Novelty per Basic node at decision time; empty for the first task.
  std::vector<double> ks;
  double tau = 0.0;
};

/// Nodes in creation order (id = position); one node per task.
class GraphState {
 public:
  GraphState() = default;
  /// Throws InvalidSpecError for an invalid architecture.
  explicit GraphState(vae::VaeArch arch);

  [[nodiscard]] const vae::VaeArch& arch() const { return arch_; }
  [[nodiscard]] const std::vector<BasicNode>& basic_nodes() const { return basic_; }
  [[nodiscard]] std::vector<BasicNode>& basic_nodes() { return basic_; }
  [[nodiscard]] const std::vector<SpecificNode>& specific_nodes() const { return specific_; }
  [[nodiscard]] std::vector<SpecificNode>& specific_nodes() { return specific_; }
  [[nodiscard]] const std::vector<ExpansionRecord>& expansion_log() const { return log_; }

  [[nodiscard]] std::size_t node_count() const { return kinds_.size(); }
  [[nodiscard]] NodeKind kind(std::size_t id) const;
  /// Throws ContractError unless `id` names a node of that kind.
  [[nodiscard]] const BasicNode& basic(std::size_t id) const;
  [[nodiscard]] const SpecificNode& specific(std::size_t id) const;
  [[nodiscard]] int task_of(std::size_t id) const;

  /// t x t, row-major, t = node_count(). Row of a Specific node holds its pi
  /// in the columns of the Basic nodes it uses; every other entry is 0.
  [[nodiscard]] std::vector<double> adjacency() const;

  BasicNode& add_basic(BasicNode node);
  SpecificNode& add_specific(SpecificNode node);
  void record(ExpansionRecord r);

 private:
  vae::VaeArch arch_;
  std::vector<BasicNode> basic_;
  std::vector<SpecificNode> specific_;
  std::vector<NodeKind> kinds_;
  std::vector<std::size_t> slot_;  // id -> index within its kind
  std::vector<ExpansionRecord> log_;
};

/// Novelty of a probe set per Basic node: |best_elbo - mean ELBO over the
/// probe|, one content-keyed latent draw per example (invariant to row order).
/// Throws ContractError without Basic nodes, std::invalid_argument for an empty probe.
std::vector<double> knowledge_novelty(const GraphState& graph, const nn::Tensor& probe, const nn::Rng& rng);

/// First min(limit, n) rows.
nn::Tensor novelty_probe(const nn::Tensor& train, std::size_t limit = 1000);

/// Empty ks (first task) -> basic; otherwise basic iff min(ks) > tau, unless overridden.
Decision expansion_decision(const std::vector<double>& ks, double tau, Override ov = Override::none);

/// pi_i = (w - ks_i) / sum_j (w - ks_j) with w = sum_j ks_j. A single node gets
/// (1); a zero denominator (all ks equal, all zero included) gives uniform weights.
/// Throws std::invalid_argument for an empty or negative ks.
std::vector<double> importance_weights(const std::vector<double>& ks);

/// Fresh Basic node with the next id; sub-models seeded from (seed, label).
BasicNode& build_basic_node(GraphState& graph, int task_id, std::uint64_t seed, const std::string& label);

/// Fresh Specific node over the current Basic nodes. Throws ContractError when
/// pi does not have one entry per Basic node or is off the simplex.
SpecificNode& build_specific_node(GraphState& graph, int task_id, std::vector<double> pi, std::uint64_t seed,
                                  const std::string& label);

}  // namespace degm::graph
