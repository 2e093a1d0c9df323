#include "degm/replay/diagnose.hpp"

#include <memory>
#include <utility>
#include <stdexcept>

#include "degm/bounds/kl_gap.hpp"

namespace degm::replay {

std::vector<bounds::DiagnosticRecord> diagnose_gr_run(const data::TaskStream& stream, const GrRunOptions& run,
                                                      const std::map<std::size_t, vae::VaeModel>& snapshots,
                                                      const DiagnoseOptions& options) {
  const std::size_t epochs = run.train.epochs;
  if (epochs == 0) throw std::invalid_argument("diagnose: zero epochs per task");
  for (std::size_t t = 0; t <= stream.size(); ++t) {
    if (!snapshots.contains(t * epochs)) {
      throw std::invalid_argument("diagnose: missing snapshot for global epoch " + std::to_string(t * epochs) +
                                  "; rerun training with diagnostics enabled");
    }
  }
  const RunStreams streams{run.seed};
  std::vector<std::shared_ptr<const vae::VaeModel>> frozen;
  std::vector<std::size_t> frozen_epoch;
  for (const auto& [epoch, model] : snapshots) {
    frozen.push_back(std::make_shared<const vae::VaeModel>(model.clone()));
    frozen_epoch.push_back(epoch);
  }

  std::vector<bounds::DiagnosticRecord> out;
  std::size_t current_task = 0;
  nn::Tensor mixed, pooled;
  std::vector<nn::Tensor> targets;
  // Snapshot index -> its reconstructions of the current task's pooled targets and mixed set.
  std::map<std::size_t, std::pair<nn::Tensor, nn::Tensor>> outputs;
  for (std::size_t s = 0; s < frozen.size(); ++s) {
    const std::size_t g = frozen_epoch[s];
    if (g == 0) continue;
    const std::size_t t = (g - 1) / epochs + 1;
    if (t > stream.size()) break;
    if (t != current_task) {
      const vae::VaeModel& previous = snapshots.at((t - 1) * epochs);
      mixed = gr_training_set(stream, t, &previous, run.train, streams).samples;
      targets.clear();
      for (std::size_t j = 0; j < t; ++j) targets.push_back(stream.tasks[j].test.images);
      pooled = bounds::stack_sets(targets);
      outputs.clear();
      current_task = t;
    }
    const std::size_t first = s + 1 > options.pool_size ? s + 1 - options.pool_size : 0;
    bounds::PoolOutputs on_targets, on_mixed;
    for (std::size_t p = first; p <= s; ++p) {
      auto it = outputs.find(p);
      if (it == outputs.end()) {
        nn::NoGradGuard guard;
        it = outputs.emplace(p, std::pair{frozen[p]->reconstruct(pooled), frozen[p]->reconstruct(mixed)}).first;
      }
      on_targets.push_back(it->second.first);
      on_mixed.push_back(it->second.second);
    }
    std::erase_if(outputs, [first](const auto& kv) { return kv.first < first; });
    bounds::LelboOptions lo;
    lo.delta = options.delta;
    lo.rademacher_draws = options.rademacher_draws;
    lo.rng = streams.diagnostics();
    bounds::DiagnosticRecord r;
    r.epoch = g;
    r.task_index = t;
    r.task_epoch = g - (t - 1) * epochs;
    r.terms = bounds::lelbo_breakdown(*frozen[s], targets, mixed, on_targets, on_mixed, lo);
    out.push_back(r);
  }
  return out;
}

}  // namespace degm::replay
