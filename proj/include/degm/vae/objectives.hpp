#pragma once

#include <cstddef>
#include <vector>

#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/vae.hpp"

namespace degm::vae {

/// Bernoulli probabilities are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

/// z = mu + exp(logvar / 2) * noise.
nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar, const nn::Tensor& noise);

/// Per-row KL(N(mu, exp(logvar)) || N(0, I)) = 1/2 sum_j (mu^2 + exp(lv) - lv - 1), [n].
nn::Tensor gaussian_kl_rows(const nn::Tensor& mu, const nn::Tensor& logvar);
/// Batch mean of gaussian_kl_rows.
double gaussian_kl(const nn::Tensor& mu, const nn::Tensor& logvar);

/// Per-row log p(x|z) given the decoder output, [n]:
///   bernoulli          sum x log y + (1 - x) log(1 - y), y clamped
///   gaussian_half      -s^2 |x - y|^2 - (d/2) log pi
///   gaussian_identity  -s^2 |x - y|^2 / 2 - (d/2) log 2 pi
/// with s = obs.pixel_scale, divided by d when obs.normalize. Throws DomainError for bernoulli targets
/// outside [0, 1]. x is a constant.
nn::Tensor recon_loglik_rows(const nn::Tensor& output, const nn::Tensor& x, const ObservationModel& obs);
double recon_loglik(const nn::Tensor& output, const nn::Tensor& x, const ObservationModel& obs);

/// Mean-field estimate of a bound on log p(x) over a batch.
struct ElboEstimate {
  /// Batch mean, nats (divided by d when normalized).
  double total = 0.0;
  /// Mean reconstruction log-likelihood over every latent sample.
  double recon_term = 0.0;
  /// Mean analytic KL.
  double kl_term = 0.0;
  std::size_t k_prime = 1;
  std::size_t n_data = 0;
  /// Per-example bound, [n].
  std::vector<double> per_example;
  /// Differentiable scalar equal to total.
  nn::Tensor objective;

  /// recon_term - kl_term: the single-sample-average ELBO.
  [[nodiscard]] double elbo_part() const { return recon_term - kl_term; }
};

/// Standard normal noise of shape [rows, cols] drawn in row-major order.
nn::Tensor draw_noise(nn::Rng& rng, std::size_t rows, std::size_t cols);

/// Noise for `per_example` latent samples of each row of x, [n * per_example, cols].
/// The draws for a row depend only on its pixel values and `base`, so scores
/// built on them are invariant to the order of the rows.
nn::Tensor keyed_noise(const nn::Tensor& x, std::size_t per_example, std::size_t cols,
                       const nn::Rng& base);

/// ELBO with mc_samples reparameterized draws per example and analytic KL.
/// noise is [n * mc_samples, L], example-major.
ElboEstimate elbo(const LatentVariableModel& model, const nn::Tensor& x, std::size_t mc_samples,
                  const nn::Tensor& noise);
ElboEstimate elbo(const LatentVariableModel& model, const nn::Tensor& x, std::size_t mc_samples,
                  nn::Rng& rng);

/// Importance-weighted bound with K' samples per example, noise [n * K', L].
///
/// With r_k the reconstruction term, KL the analytic KL and
/// l_k = log p(z_k) - log q(z_k|x), each example contributes
///   log (1/K') sum_k exp(r_k - KL + l_k - mean_j l_j).
/// The shift -KL - mean_j l_j has zero expectation, so the estimator has the
/// expectation of the usual importance-weighted bound, and at K' = 1 it is
/// exactly the ELBO under the same noise. total is assembled as
/// recon_term - kl_term + mean(per_example - (mean_k r_k - KL)).
ElboEstimate iwelbo(const LatentVariableModel& model, const nn::Tensor& x, std::size_t k_prime,
                    const nn::Tensor& noise);
ElboEstimate iwelbo(const LatentVariableModel& model, const nn::Tensor& x, std::size_t k_prime,
                    nn::Rng& rng);

struct NllEstimate {
  /// Mean negative log-likelihood estimate, nats.
  double mean = 0.0;
  /// Standard error of the mean over examples.
  double std_error = 0.0;
  std::vector<double> per_example;
};

/// -log (1/K') sum_k p(x, z_k) / q(z_k|x) per example, averaged. Runs without
/// a tape in chunks of at most kChunkSamples latent rows; chunk c draws from
/// rng.child("chunk", c). Throws std::invalid_argument for an empty dataset
/// or k_prime == 0.
NllEstimate nll_estimate(const LatentVariableModel& model, const nn::Tensor& data,
                         std::size_t k_prime, const nn::Rng& rng);

/// Per-row log-mean-exp of importance weights, [n], without history.
std::vector<double> log_marginal_rows(const LatentVariableModel& model, const nn::Tensor& x,
                                      std::size_t k_prime, const nn::Tensor& noise);

inline constexpr std::size_t kChunkSamples = 16384;

}  // namespace degm::vae
