#include "degm/replay/trainer.hpp"

#include <numeric>
#include <stdexcept>

namespace degm::replay {

using nn::Tensor;

std::vector<EpochMetrics> train_epochs(const std::vector<Tensor>& params, const Tensor& data,
                                       const TrainConfig& config, const nn::Rng& stream,
                                       const BatchObjective& objective, std::size_t task_index,
                                       std::size_t epoch_offset, const EpochHook& hook) {
  if (config.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  nn::Adam opt(params, nn::AdamHyper{config.learning_rate, 0.9, 0.999, 1e-8});
  const std::size_t n = data.rows();
  std::vector<EpochMetrics> out;
  std::vector<std::size_t> order(n);
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Rng shuffle = stream.child("shuffle", e);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    nn::Rng noise = stream.child("noise", e);

    EpochMetrics m;
    m.task_index = task_index;
    m.task_epoch = e;
    m.global_epoch = epoch_offset + e;
    const std::size_t d = data.cols();
    const auto px = data.data();
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t end = std::min(n, b + config.batch_size);
      std::vector<double> v;
      v.reserve((end - b) * d);
      for (std::size_t i = b; i < end; ++i) {
        const auto row = px.subspan(order[i] * d, d);
        v.insert(v.end(), row.begin(), row.end());
      }
      const Tensor batch = Tensor::matrix(end - b, d, std::move(v));
      opt.zero_grad();
      const vae::ElboEstimate est = objective(batch, noise);
      scale(est.objective, -1.0).backward();
      opt.step();
      const double w = static_cast<double>(end - b);
      m.objective += w * est.total;
      m.elbo += w * est.elbo_part();
    }
    m.objective /= static_cast<double>(n);
    m.elbo /= static_cast<double>(n);
    out.push_back(m);
    if (hook) hook(m);
  }
  return out;
}

BatchObjective model_objective(const vae::LatentVariableModel& model, const TrainConfig& config) {
  if (config.objective == Objective::iwelbo) {
    const std::size_t k = config.k_prime;
    return [&model, k](const Tensor& x, nn::Rng& r) { return vae::iwelbo(model, x, k, r); };
  }
  return [&model](const Tensor& x, nn::Rng& r) { return vae::elbo(model, x, 1, r); };
}

std::vector<EpochMetrics> train_vae(vae::VaeModel& model, const Tensor& data, const TrainConfig& config,
                                    const nn::Rng& stream, std::size_t task_index, std::size_t epoch_offset,
                                    const EpochHook& hook) {
  return train_epochs(model.trainable_parameters(), data, config, stream, model_objective(model, config),
                      task_index, epoch_offset, hook);
}

MixedDataset gr_training_set(const data::TaskStream& stream, std::size_t t, const vae::VaeModel* previous,
                             const TrainConfig& config, const RunStreams& streams) {
  if (t == 0 || t > stream.size()) throw std::invalid_argument("gr_training_set: task index out of range");
  std::size_t seen = 0;
  for (std::size_t j = 0; j + 1 < t; ++j) seen += stream.tasks[j].train.size();
  const std::size_t n_replay = replay_size(seen, config.replay_ratio);
  std::optional<PseudoDataset> pseudo;
  if (t > 1 && n_replay > 0) {
    if (!previous) throw std::invalid_argument("gr_training_set: replay needs the previous model");
    pseudo = generate_pseudo(*previous, n_replay, streams.replay(t), config.binarize_replay, t - 1);
  }
  return mix_datasets(pseudo, stream.tasks[t - 1].train.images, streams.mix(t));
}

std::vector<EpochMetrics> train_task_gr(vae::VaeModel& model, const data::TaskStream& stream, std::size_t t,
                                        const TrainConfig& config, const RunStreams& streams,
                                        std::size_t epoch_offset, const EpochHook& hook) {
  const MixedDataset mixed = gr_training_set(stream, t, &model, config, streams);
  if (!config.warm_start && t > 1) model = vae::build_vae(model.arch(), streams.seed, streams.init_label(t));
  return train_vae(model, mixed.samples, config, streams.train(t), t, epoch_offset, hook);
}

bounds::EvalRecord evaluate_model(const vae::LatentVariableModel& model, const Tensor& test, std::size_t k_prime,
                                  const nn::Rng& rng) {
  bounds::EvalRecord r;
  const vae::NllEstimate nll = vae::nll_estimate(model, test, k_prime, rng.child("nll"));
  r.nll = nll.mean;
  r.nll_std_error = nll.std_error;
  r.k_prime = k_prime;
  nn::NoGradGuard guard;
  nn::Rng er = rng.child("elbo");
  const vae::ElboEstimate e = vae::elbo(model, test, 1, er);
  r.elbo = e.total;
  r.recon_term = e.recon_term;
  r.kl_term = e.kl_term;
  return r;
}

GrRun run_gr_sequence(const data::TaskStream& stream, const GrRunOptions& options, const EpochHook& hook) {
  if (stream.size() == 0) throw std::invalid_argument("run_gr_sequence: empty stream");
  const RunStreams streams{options.seed};
  GrRun run;
  run.model = vae::build_vae(options.arch, options.seed, streams.init_label(1));
  const bool keep = options.snapshot_every > 0;
  if (keep) run.snapshots.emplace(0, run.model.clone());
  std::size_t offset = 0;
  for (std::size_t t = 1; t <= stream.size(); ++t) {
    const auto epoch_hook = [&](const EpochMetrics& m) {
      if (keep && (m.global_epoch % options.snapshot_every == 0 || m.task_epoch == options.train.epochs)) {
        run.snapshots.insert_or_assign(m.global_epoch, run.model.clone());
      }
      if (hook) hook(m);
    };
    auto metrics = train_task_gr(run.model, stream, t, options.train, streams, offset, epoch_hook);
    offset += metrics.size();
    run.epochs.insert(run.epochs.end(), metrics.begin(), metrics.end());
    for (std::size_t j = 1; j <= t; ++j) {
      bounds::EvalRecord r = evaluate_model(run.model, stream.tasks[j - 1].test.images, options.eval_k_prime,
                                            streams.eval(t, j));
      r.task_index = t;
      r.eval_task = j;
      r.epoch = offset;
      run.ledger.append(r);
    }
  }
  return run;
}

}  // namespace degm::replay
