#pragma once

#include <vector>

#include "degm/bounds/risk.hpp"
#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/vae.hpp"

namespace degm::bounds {

struct KlGap {
  /// (1/t) sum_i mean over target set i of KL(q(z|x) || p(z)).
  double kl1 = 0.0;
  /// Mean over the mixed set of KL(q(z|x) || p(z)).
  double kl2 = 0.0;
  double gap = 0.0;
};

/// Throws std::invalid_argument for no target sets or an empty set.
KlGap kl_gap(const vae::LatentVariableModel& model, const std::vector<nn::Tensor>& target_sets,
             const nn::Tensor& mixed_set);

/// Factor taking a squared loss on [0, 1] pixels into the units of the
/// model's reconstruction term: s^2 for Gaussian likelihoods (1 for
/// bernoulli), divided by d when the reconstruction term is normalized.
double loss_units(const vae::ObservationModel& obs, std::size_t d);

struct LelboOptions {
  /// Loss bound M of the slack in [0, 1] pixel units; 0 selects the data
  /// dimension. Scaled by loss_units like the discrepancy.
  double bound_m = 0.0;
  double delta = 0.05;
  /// Sign draws for the Rademacher terms; 0 leaves them at zero.
  std::size_t rademacher_draws = 0;
  /// Source of content-keyed ELBO noise and sign draws.
  nn::Rng rng{0, "lelbo"};
};

struct LelboBreakdown {
  /// E_mixed[-ELBO].
  double source_risk = 0.0;
  KlGap kl_gap;
  /// Empirical discrepancy between the pooled target sets and the mixed set,
  /// in loss_units of the model.
  double discrepancy = 0.0;
  double slack = 0.0;
  /// (1/t) sum_i E_{target i}[-ELBO].
  double target_risk = 0.0;
  /// target_risk - (source_risk + kl_gap.gap); the share left to the
  /// discrepancy and fit terms.
  double residual = 0.0;
  /// The optimal combined risk cannot be estimated; only its lower bound is known.
  double epsilon_lower_bound = 0.0;
};

LelboBreakdown lelbo_breakdown(const vae::LatentVariableModel& model,
                               const std::vector<nn::Tensor>& target_sets, const nn::Tensor& mixed_set,
                               const HypothesisPool& pool, const LelboOptions& options = {});
/// As above with the pool already applied to the stacked target sets and the mixed set.
LelboBreakdown lelbo_breakdown(const vae::LatentVariableModel& model,
                               const std::vector<nn::Tensor>& target_sets, const nn::Tensor& mixed_set,
                               const PoolOutputs& on_targets, const PoolOutputs& on_mixed,
                               const LelboOptions& options = {});
/// Target sets stacked row-wise in order.
nn::Tensor stack_sets(const std::vector<nn::Tensor>& sets);

/// Mean -ELBO over a set with one content-keyed noise draw per example.
double negative_elbo(const vae::LatentVariableModel& model, const nn::Tensor& data, const nn::Rng& rng);

}  // namespace degm::bounds
