#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "degm/bounds/ledger.hpp"
#include "degm/data/stream.hpp"
#include "degm/nn/adam.hpp"
#include "degm/nn/rng.hpp"
#include "degm/replay/replay.hpp"
#include "degm/vae/objectives.hpp"
#include "degm/vae/vae.hpp"

namespace degm::replay {

enum class Objective { elbo, iwelbo };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Objective objective = Objective::elbo;
  /// Importance samples for Objective::iwelbo.
  std::size_t k_prime = 1;
  /// Pseudo-data size as a multiple of the previously seen training examples.
  double replay_ratio = 1.0;
  /// Continue from the previous task's parameters; otherwise reinitialize.
  bool warm_start = true;
  /// Bernoulli draws on pseudo samples of bernoulli models.
  bool binarize_replay = true;
};

struct EpochMetrics {
  std::size_t task_index = 0;
  /// 1-based within the task.
  std::size_t task_epoch = 0;
  /// 1-based across the run.
  std::size_t global_epoch = 0;
  /// Mean training objective (the bound being maximized), weighted by batch size.
  double objective = 0.0;
  /// Mean recon - KL part of the estimates, weighted by batch size.
  double elbo = 0.0;
};

/// Bound estimate for one batch; must build a fresh graph on each call.
using BatchObjective = std::function<vae::ElboEstimate(const nn::Tensor& batch, nn::Rng& noise)>;
using EpochHook = std::function<void(const EpochMetrics&)>;

/// Maximizes the objective with a fresh Adam state over `params`. Epoch e
/// shuffles with stream.child("shuffle", e) and draws noise from
/// stream.child("noise", e). Metrics carry task_index and the global epoch
/// offset given here.
std::vector<EpochMetrics> train_epochs(const std::vector<nn::Tensor>& params, const nn::Tensor& data,
                                       const TrainConfig& config, const nn::Rng& stream,
                                       const BatchObjective& objective, std::size_t task_index = 1,
                                       std::size_t epoch_offset = 0, const EpochHook& hook = {});

/// The configured objective on a single model.
BatchObjective model_objective(const vae::LatentVariableModel& model, const TrainConfig& config);

/// Plain training of one model on one dataset.
std::vector<EpochMetrics> train_vae(vae::VaeModel& model, const nn::Tensor& data, const TrainConfig& config,
                                    const nn::Rng& stream, std::size_t task_index = 1,
                                    std::size_t epoch_offset = 0, const EpochHook& hook = {});

/// Streams of a run, all children of Rng(seed, "run").
struct RunStreams {
  std::uint64_t seed = 0;

  [[nodiscard]] nn::Rng root() const { return nn::Rng(seed, "run"); }
  [[nodiscard]] nn::Rng train(std::size_t task) const { return root().child("train/task", task); }
  [[nodiscard]] nn::Rng replay(std::size_t task) const { return root().child("replay/task", task); }
  [[nodiscard]] nn::Rng mix(std::size_t task) const { return root().child("mix/task", task); }
  [[nodiscard]] nn::Rng eval(std::size_t after_task, std::size_t eval_task) const {
    return root().child("eval/after", after_task).child("task", eval_task);
  }
  [[nodiscard]] nn::Rng diagnostics() const { return root().child("diagnostics"); }
  [[nodiscard]] nn::Rng novelty(std::size_t task) const { return root().child("novelty/task", task); }
  [[nodiscard]] std::string init_label(std::size_t task) const { return "init/task" + std::to_string(task); }
};

/// Training set of task t (1-based) under replay: the task's training images
/// mixed with round(ratio * seen) pseudo samples from `previous` (none for
/// t == 1 or a zero size).
MixedDataset gr_training_set(const data::TaskStream& stream, std::size_t t, const vae::VaeModel* previous,
                             const TrainConfig& config, const RunStreams& streams);

/// One replay step: builds the mixed set from the current model and trains it.
std::vector<EpochMetrics> train_task_gr(vae::VaeModel& model, const data::TaskStream& stream, std::size_t t,
                                        const TrainConfig& config, const RunStreams& streams,
                                        std::size_t epoch_offset = 0, const EpochHook& hook = {});

/// Held-out evaluation of a model on one test set.
bounds::EvalRecord evaluate_model(const vae::LatentVariableModel& model, const nn::Tensor& test,
                                  std::size_t k_prime, const nn::Rng& rng);

struct GrRunOptions {
  TrainConfig train;
  vae::VaeArch arch;
  std::uint64_t seed = 1;
  /// K' of the held-out evaluations.
  std::size_t eval_k_prime = 200;
  /// Keep a snapshot of the model every this many global epochs (0: none).
  /// Task ends and the initial model are always kept when enabled.
  std::size_t snapshot_every = 0;
};

struct GrRun {
  vae::VaeModel model;
  bounds::DiagnosticsLedger ledger;
  std::vector<EpochMetrics> epochs;
  /// Global epoch -> model after it (0 is the initialization).
  std::map<std::size_t, vae::VaeModel> snapshots;
};

/// Replay training over every task in order. After task t every seen test
/// set j <= t is evaluated into the ledger.
GrRun run_gr_sequence(const data::TaskStream& stream, const GrRunOptions& options,
                      const EpochHook& hook = {});

}  // namespace degm::replay
