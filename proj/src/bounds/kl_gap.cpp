#include "degm/bounds/kl_gap.hpp"

#include <cmath>
#include <stdexcept>

#include "degm/vae/objectives.hpp"

namespace degm::bounds {

using nn::Tensor;

namespace {

double mean_kl(const vae::LatentVariableModel& model, const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("kl_gap: empty set");
  nn::NoGradGuard guard;
  const vae::Posterior q = model.posterior(x);
  return mean(vae::gaussian_kl_rows(q.mu, q.logvar)).item();
}

}  // namespace

Tensor stack_sets(const std::vector<Tensor>& sets) {
  if (sets.empty()) throw std::invalid_argument("stack_sets: no sets");
  std::size_t rows = 0;
  const std::size_t d = sets.front().cols();
  std::vector<double> v;
  for (const auto& s : sets) {
    if (s.cols() != d) throw std::invalid_argument("lelbo_breakdown: target sets differ in width");
    rows += s.rows();
    v.insert(v.end(), s.data().begin(), s.data().end());
  }
  return Tensor::matrix(rows, d, std::move(v));
}

double loss_units(const vae::ObservationModel& obs, std::size_t d) {
  if (d == 0) throw std::invalid_argument("loss_units: zero dimension");
  const double s2 = obs.likelihood == vae::Likelihood::bernoulli ? 1.0 : obs.pixel_scale * obs.pixel_scale;
  return obs.normalize ? s2 / static_cast<double>(d) : s2;
}

KlGap kl_gap(const vae::LatentVariableModel& model, const std::vector<Tensor>& target_sets,
             const Tensor& mixed_set) {
  if (target_sets.empty()) throw std::invalid_argument("kl_gap: no target sets");
  KlGap g;
  for (const auto& s : target_sets) g.kl1 += mean_kl(model, s);
  g.kl1 /= static_cast<double>(target_sets.size());
  g.kl2 = mean_kl(model, mixed_set);
  g.gap = std::abs(g.kl1 - g.kl2);
  return g;
}

double negative_elbo(const vae::LatentVariableModel& model, const Tensor& data, const nn::Rng& rng) {
  if (data.numel() == 0) throw std::invalid_argument("negative_elbo: empty set");
  nn::NoGradGuard guard;
  const Tensor noise = vae::keyed_noise(data, 1, model.arch().latent_dim, rng);
  return -vae::elbo(model, data, 1, noise).total;
}

LelboBreakdown lelbo_breakdown(const vae::LatentVariableModel& model, const std::vector<Tensor>& target_sets,
                               const Tensor& mixed_set, const HypothesisPool& pool,
                               const LelboOptions& options) {
  if (target_sets.empty()) throw std::invalid_argument("lelbo_breakdown: no target sets");
  return lelbo_breakdown(model, target_sets, mixed_set, apply_pool(pool, stack_sets(target_sets)),
                         apply_pool(pool, mixed_set), options);
}

LelboBreakdown lelbo_breakdown(const vae::LatentVariableModel& model, const std::vector<Tensor>& target_sets,
                               const Tensor& mixed_set, const PoolOutputs& on_targets,
                               const PoolOutputs& on_mixed, const LelboOptions& options) {
  if (target_sets.empty()) throw std::invalid_argument("lelbo_breakdown: no target sets");
  LelboBreakdown b;
  const nn::Rng noise = options.rng.child("elbo");
  b.source_risk = negative_elbo(model, mixed_set, noise);
  for (const auto& s : target_sets) b.target_risk += negative_elbo(model, s, noise);
  b.target_risk /= static_cast<double>(target_sets.size());
  b.kl_gap = kl_gap(model, target_sets, mixed_set);

  const double units = loss_units(model.arch().observation, mixed_set.cols());
  b.discrepancy = units * discrepancy_from_outputs(on_targets, on_mixed);
  double rad_p = 0.0, rad_q = 0.0;
  if (options.rademacher_draws > 0) {
    rad_p = units * rademacher_from_outputs(on_targets, options.rademacher_draws, options.rng.child("rad/target"));
    rad_q = units * rademacher_from_outputs(on_mixed, options.rademacher_draws, options.rng.child("rad/mixed"));
  }
  std::size_t pooled_rows = 0;
  for (const auto& s : target_sets) pooled_rows += s.rows();
  const double m = units * (options.bound_m > 0.0 ? options.bound_m : static_cast<double>(mixed_set.cols()));
  b.slack = discrepancy_slack(pooled_rows, mixed_set.rows(), m, options.delta, rad_p, rad_q);
  b.residual = b.target_risk - (b.source_risk + b.kl_gap.gap);
  return b;
}

}  // namespace degm::bounds
