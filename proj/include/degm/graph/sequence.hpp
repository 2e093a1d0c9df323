#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "degm/bounds/ledger.hpp"
#include "degm/data/stream.hpp"
#include "degm/graph/graph.hpp"
#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/replay/trainer.hpp"
#include "degm/vae/vae.hpp"

namespace degm::graph {

/// The generative path of node `id` as a latent-variable model (a shallow
/// handle onto the graph's parameters; the graph must outlive it).
std::unique_ptr<vae::LatentVariableModel> node_model(const GraphState& graph, std::size_t id);

/// ELBO of a Basic node or MELBO of a Specific node (k_prime > 1: the
/// importance-weighted variants).
vae::ElboEstimate node_bound(const GraphState& graph, std::size_t id, const nn::Tensor& x, std::size_t k_prime,
                             nn::Rng& rng);

struct Selection {
  std::size_t node = 0;
  /// Mean bound per node, indexed by node id.
  std::vector<double> scores;
};

/// Index of the largest score; ties go to the lowest index. Throws ContractError when empty.
std::size_t argmax_lowest(const std::vector<double>& scores);

/// Scores every node by its mean single-sample bound over x with
/// content-keyed noise (invariant to row order) and returns the argmax.
/// Throws ContractError for an empty graph.
Selection select_node(const GraphState& graph, const nn::Tensor& x, const nn::Rng& rng);

struct GraphEval {
  bounds::EvalRecord record;
  /// Selected node per test batch.
  std::vector<std::size_t> selected;
};

/// Splits the test set into consecutive batches of `batch` rows; each batch is
/// scored by the node select_node picks for it. NLL, ELBO and its terms are
/// means over examples.
GraphEval evaluate_graph(const GraphState& graph, const nn::Tensor& test, std::size_t k_prime, std::size_t batch,
                         const nn::Rng& rng);

struct DegmConfig {
  replay::TrainConfig train;
  vae::VaeArch arch;
  std::uint64_t seed = 1;
  /// Expansion threshold on min novelty, in the units of the ELBO.
  double tau = std::numeric_limits<double>::infinity();
  Override override_rule = Override::none;
  std::size_t probe_size = 1000;
  std::size_t eval_k_prime = 200;
  std::size_t eval_batch = 100;
};

struct DegmRun {
  GraphState graph;
  bounds::DiagnosticsLedger ledger;
  std::vector<replay::EpochMetrics> epochs;
  /// (after task, eval task) -> selected node per test batch.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> selections;
};

/// Task t: novelty on the first probe_size training rows, expansion decision,
/// build, train only the new node on the task's own data, freeze it. Basic
/// node t starts from build_vae(arch, seed, init_label(t)), so task 1 matches
/// the replay baseline's first task. After task t every seen test set is
/// evaluated with evaluate_graph into the ledger.
DegmRun train_degm_sequence(const data::TaskStream& stream, const DegmConfig& config,
                            const replay::EpochHook& hook = {});

}  // namespace degm::graph
