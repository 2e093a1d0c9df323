#include "degm/graph/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "degm/graph/specific.hpp"
#include "degm/nn/errors.hpp"
#include "degm/vae/objectives.hpp"

namespace degm::graph {

using nn::Tensor;

std::unique_ptr<vae::LatentVariableModel> node_model(const GraphState& graph, std::size_t id) {
  if (graph.kind(id) == NodeKind::basic) return std::make_unique<vae::VaeModel>(graph.basic(id).model);
  return std::make_unique<SpecificPath>(graph.specific(id), graph);
}

vae::ElboEstimate node_bound(const GraphState& graph, std::size_t id, const Tensor& x, std::size_t k_prime,
                             nn::Rng& rng) {
  if (graph.kind(id) == NodeKind::basic) {
    const auto& m = graph.basic(id).model;
    return k_prime > 1 ? vae::iwelbo(m, x, k_prime, rng) : vae::elbo(m, x, 1, rng);
  }
  const auto& s = graph.specific(id);
  return k_prime > 1 ? iw_melbo(s, graph, x, k_prime, rng) : melbo(s, graph, x, 1, rng);
}

std::size_t argmax_lowest(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("argmax: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

Selection select_node(const GraphState& graph, const Tensor& x, const nn::Rng& rng) {
  if (graph.node_count() == 0) throw ContractError("select_node: empty graph");
  nn::NoGradGuard guard;
  const std::size_t latent = graph.arch().latent_dim;
  Selection s;
  for (std::size_t id = 0; id < graph.node_count(); ++id) {
    const nn::Rng base = rng.child("node", id);
    if (graph.kind(id) == NodeKind::basic) {
      s.scores.push_back(vae::elbo(graph.basic(id).model, x, 1, vae::keyed_noise(x, 1, latent, base)).total);
    } else {
      const auto& node = graph.specific(id);
      s.scores.push_back(melbo(node, graph, x, 1, keyed_branch_noise(x, node.pi.size(), 1, latent, base)).total);
    }
  }
  s.node = argmax_lowest(s.scores);
  return s;
}

GraphEval evaluate_graph(const GraphState& graph, const Tensor& test, std::size_t k_prime, std::size_t batch,
                         const nn::Rng& rng) {
  if (batch == 0) throw std::invalid_argument("evaluate_graph: batch must be positive");
  if (test.rank() != 2 || test.rows() == 0) throw std::invalid_argument("evaluate_graph: empty test set");
  GraphEval out;
  std::vector<double> nll;
  double elbo_sum = 0.0, recon_sum = 0.0, kl_sum = 0.0;
  const std::size_t n = test.rows();
  for (std::size_t b = 0, start = 0; start < n; ++b, start += batch) {
    const Tensor x = test.slice_rows(start, std::min(n, start + batch));
    const nn::Rng br = rng.child("batch", b);
    const std::size_t id = select_node(graph, x, br.child("select")).node;
    out.selected.push_back(id);
    const auto model = node_model(graph, id);
    const vae::NllEstimate e = vae::nll_estimate(*model, x, k_prime, br.child("nll"));
    nll.insert(nll.end(), e.per_example.begin(), e.per_example.end());
    nn::NoGradGuard guard;
    nn::Rng er = br.child("elbo");
    const vae::ElboEstimate bound = node_bound(graph, id, x, 1, er);
    const auto rows = static_cast<double>(x.rows());
    elbo_sum += bound.total * rows;
    recon_sum += bound.recon_term * rows;
    kl_sum += bound.kl_term * rows;
  }
  const auto nd = static_cast<double>(n);
  bounds::EvalRecord& r = out.record;
  for (double v : nll) r.nll += v;
  r.nll /= nd;
  if (n > 1) {
    double ss = 0.0;
    for (double v : nll) ss += (v - r.nll) * (v - r.nll);
    r.nll_std_error = std::sqrt(ss / (nd - 1.0) / nd);
  }
  r.elbo = elbo_sum / nd;
  r.recon_term = recon_sum / nd;
  r.kl_term = kl_sum / nd;
  r.k_prime = k_prime;
  return out;
}

namespace {

replay::BatchObjective specific_objective(const SpecificNode& node, const GraphState& graph,
                                          const replay::TrainConfig& config) {
  if (config.objective == replay::Objective::iwelbo) {
    const std::size_t k = config.k_prime;
    return [&node, &graph, k](const Tensor& x, nn::Rng& r) { return iw_melbo(node, graph, x, k, r); };
  }
  return [&node, &graph](const Tensor& x, nn::Rng& r) { return melbo(node, graph, x, 1, r); };
}

double best_of(const std::vector<replay::EpochMetrics>& metrics) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& m : metrics) best = std::max(best, m.elbo);
  return best;
}

}  // namespace

DegmRun train_degm_sequence(const data::TaskStream& stream, const DegmConfig& config,
                            const replay::EpochHook& hook) {
  if (stream.size() == 0) throw std::invalid_argument("train_degm_sequence: empty stream");
  if (config.probe_size == 0) throw std::invalid_argument("train_degm_sequence: probe_size must be positive");
  const replay::RunStreams streams{config.seed};
  DegmRun run{GraphState(config.arch), {}, {}, {}};
  GraphState& g = run.graph;
  std::size_t offset = 0;
  for (std::size_t t = 1; t <= stream.size(); ++t) {
    const Tensor& train = stream.tasks[t - 1].train.images;
    const int task_id = static_cast<int>(t);
    ExpansionRecord rec{task_id, Decision::basic, {}, config.tau};
    if (!g.basic_nodes().empty()) rec.ks = knowledge_novelty(g, novelty_probe(train, config.probe_size), streams.novelty(t));
    rec.decision = expansion_decision(rec.ks, config.tau, config.override_rule);

    std::vector<replay::EpochMetrics> metrics;
    if (rec.decision == Decision::basic) {
      BasicNode& node = build_basic_node(g, task_id, config.seed, streams.init_label(t));
      metrics = replay::train_vae(node.model, train, config.train, streams.train(t), t, offset, hook);
      node.best_elbo = best_of(metrics);
      node.model.set_trainable(false);
    } else {
      SpecificNode& node = build_specific_node(g, task_id, importance_weights(rec.ks), config.seed, streams.init_label(t));
      metrics = replay::train_epochs(node.parameters(), train, config.train, streams.train(t),
                                     specific_objective(node, g, config.train), t, offset, hook);
      node.set_trainable(false);
    }
    g.record(std::move(rec));
    offset += metrics.size();
    run.epochs.insert(run.epochs.end(), metrics.begin(), metrics.end());
    for (std::size_t j = 1; j <= t; ++j) {
      GraphEval e = evaluate_graph(g, stream.tasks[j - 1].test.images, config.eval_k_prime, config.eval_batch,
                                   streams.eval(t, j));
      e.record.task_index = t;
      e.record.eval_task = j;
      e.record.epoch = offset;
      run.ledger.append(e.record);
      run.selections.emplace(std::make_pair(t, j), std::move(e.selected));
    }
  }
  return run;
}

}  // namespace degm::graph
