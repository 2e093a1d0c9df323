#include "degm/vae/objectives.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "degm/nn/errors.hpp"

namespace degm::vae {

using nn::Shape;
using nn::Tensor;

namespace {

void require_rows(const Tensor& noise, std::size_t rows, std::size_t cols, const char* op) {
  if (noise.rank() != 2 || noise.rows() != rows || noise.cols() != cols) {
    throw ShapeError(std::string(op) + ": noise shape " + nn::shape_str(noise.shape()) +
                     ", expected [" + std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
}

/// A rank-1 input is a single example.
Tensor as_matrix(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 1) return reshape(x, Shape{1, x.numel()});
  throw ShapeError("expected a batch [n, d] or a single example [d], got " + nn::shape_str(x.shape()));
}

std::size_t example_count(const Tensor& x) { return x.rank() == 1 ? 1 : x.rows(); }

/// [n] -> [n * k], each entry repeated k times consecutively.
Tensor repeat_entries(const Tensor& v, std::size_t k) {
  const std::size_t n = v.numel();
  return reshape(repeat_rows(reshape(v, Shape{n, 1}), k), Shape{n * k});
}

/// log p(z) - log q(z|x) per row, with z = mu + sigma * eps; normalizers cancel.
Tensor log_ratio_rows(const Tensor& z, const Tensor& logvar, const Tensor& eps) {
  return scale(row_sum(add(sub(logvar, square(z)), square(eps))), 0.5);
}

struct Draw {
  Posterior q;
  Tensor z;
  Tensor recon;  // [n * k]
  Tensor x;      // [n, d]
};

Draw sample_and_decode(const LatentVariableModel& model, const Tensor& x_in, std::size_t k,
                       const Tensor& noise, const char* op) {
  if (k == 0) throw std::invalid_argument(std::string(op) + ": sample count must be positive");
  const Tensor x = as_matrix(x_in);
  if (x.cols() != model.arch().data_dim) {
    throw ShapeError(std::string(op) + ": data width " + std::to_string(x.cols()) +
                     " does not match model width " + std::to_string(model.arch().data_dim));
  }
  Posterior q = model.posterior(x);
  const std::size_t n = x.rows();
  require_rows(noise, n * k, q.mu.cols(), op);
  const Tensor z = reparameterize(repeat_rows(q.mu, k), repeat_rows(q.logvar, k), noise);
  const Tensor recon = recon_loglik_rows(model.decode(z), repeat_rows(x, k), model.arch().observation);
  return {std::move(q), z, recon, x};
}

}  // namespace

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape()) {
    throw ShapeError("reparameterize: shapes " + nn::shape_str(mu.shape()) + ", " +
                     nn::shape_str(logvar.shape()) + ", " + nn::shape_str(noise.shape()));
  }
  return add(mu, mul(exp(scale(logvar, 0.5)), noise));
}

Tensor gaussian_kl_rows(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) throw ShapeError("gaussian_kl: mu/logvar shape mismatch");
  return scale(row_sum(add_scalar(sub(add(square(mu), exp(logvar)), logvar), -1.0)), 0.5);
}

double gaussian_kl(const Tensor& mu, const Tensor& logvar) {
  nn::NoGradGuard guard;
  return mean(gaussian_kl_rows(mu, logvar)).item();
}

Tensor recon_loglik_rows(const Tensor& output, const Tensor& x, const ObservationModel& obs) {
  if (output.shape() != x.shape()) {
    throw ShapeError("recon_loglik: output " + nn::shape_str(output.shape()) + " vs data " +
                     nn::shape_str(x.shape()));
  }
  const double d = static_cast<double>(x.cols());
  const double s2 = obs.pixel_scale * obs.pixel_scale;
  Tensor ll;
  switch (obs.likelihood) {
    case Likelihood::bernoulli:
      for (double v : x.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw DomainError("recon_loglik: bernoulli target outside [0, 1]");
        }
      }
      ll = bernoulli_loglik_rows(output, x, kProbClamp);
      break;
    case Likelihood::gaussian_half:
      ll = add_scalar(scale(row_sum(square(sub(output, x))), -s2), -0.5 * d * std::log(std::numbers::pi));
      break;
    case Likelihood::gaussian_identity:
      ll = add_scalar(scale(row_sum(square(sub(output, x))), -0.5 * s2),
                      -0.5 * d * std::log(2.0 * std::numbers::pi));
      break;
  }
  return obs.normalize ? scale(ll, 1.0 / d) : ll;
}

double recon_loglik(const Tensor& output, const Tensor& x, const ObservationModel& obs) {
  nn::NoGradGuard guard;
  return mean(recon_loglik_rows(output, x, obs)).item();
}

Tensor draw_noise(nn::Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  for (auto& e : v) e = rng.normal();
  return Tensor(Shape{rows, cols}, std::move(v));
}

Tensor keyed_noise(const Tensor& x_in, std::size_t per_example, std::size_t cols, const nn::Rng& base) {
  const Tensor x = as_matrix(x_in);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> v;
  v.reserve(n * per_example * cols);
  const auto px = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    nn::Rng r = base.child("row", nn::fnv1a_bytes(px.data() + i * d, d * sizeof(double)));
    for (std::size_t j = 0; j < per_example * cols; ++j) v.push_back(r.normal());
  }
  return Tensor(Shape{n * per_example, cols}, std::move(v));
}

ElboEstimate elbo(const LatentVariableModel& model, const Tensor& x, std::size_t mc_samples,
                  const Tensor& noise) {
  const Draw d = sample_and_decode(model, x, mc_samples, noise, "elbo");
  const std::size_t n = d.x.rows();
  const Tensor kl = gaussian_kl_rows(d.q.mu, d.q.logvar);
  const Tensor recon_ex = row_mean(reshape(d.recon, Shape{n, mc_samples}));
  const Tensor mean_recon = mean(d.recon);
  const Tensor mean_kl = mean(kl);

  ElboEstimate e;
  e.objective = sub(mean_recon, mean_kl);
  e.total = e.objective.item();
  e.recon_term = mean_recon.item();
  e.kl_term = mean_kl.item();
  e.k_prime = mc_samples;
  e.n_data = n;
  e.per_example.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.per_example[i] = recon_ex.at(i) - kl.at(i);
  return e;
}

ElboEstimate elbo(const LatentVariableModel& model, const Tensor& x, std::size_t mc_samples, nn::Rng& rng) {
  return elbo(model, x, mc_samples, draw_noise(rng, example_count(x) * mc_samples, model.arch().latent_dim));
}

ElboEstimate iwelbo(const LatentVariableModel& model, const Tensor& x, std::size_t k_prime,
                    const Tensor& noise) {
  const Draw d = sample_and_decode(model, x, k_prime, noise, "iwelbo");
  const std::size_t n = d.x.rows(), k = k_prime;
  const Tensor kl = gaussian_kl_rows(d.q.mu, d.q.logvar);
  const Tensor ratio = log_ratio_rows(d.z, repeat_rows(d.q.logvar, k), noise);
  const Tensor ratio_mean = row_mean(reshape(ratio, Shape{n, k}));
  const Tensor w = add(sub(d.recon, repeat_entries(kl, k)), sub(ratio, repeat_entries(ratio_mean, k)));
  const Tensor bound = add_scalar(row_logsumexp(reshape(w, Shape{n, k})), -std::log(static_cast<double>(k)));
  const Tensor base = sub(row_mean(reshape(d.recon, Shape{n, k})), kl);
  const Tensor mean_recon = mean(d.recon);
  const Tensor mean_kl = mean(kl);

  ElboEstimate e;
  e.objective = add(sub(mean_recon, mean_kl), mean(sub(bound, base)));
  e.total = e.objective.item();
  e.recon_term = mean_recon.item();
  e.kl_term = mean_kl.item();
  e.k_prime = k;
  e.n_data = n;
  e.per_example.assign(bound.data().begin(), bound.data().end());
  return e;
}

ElboEstimate iwelbo(const LatentVariableModel& model, const Tensor& x, std::size_t k_prime, nn::Rng& rng) {
  if (k_prime == 0) throw std::invalid_argument("iwelbo: k_prime must be positive");
  return iwelbo(model, x, k_prime, draw_noise(rng, example_count(x) * k_prime, model.arch().latent_dim));
}

std::vector<double> log_marginal_rows(const LatentVariableModel& model, const Tensor& x,
                                      std::size_t k_prime, const Tensor& noise) {
  nn::NoGradGuard guard;
  const Draw d = sample_and_decode(model, x, k_prime, noise, "log_marginal");
  const std::size_t n = d.x.rows();
  const Tensor ratio = log_ratio_rows(d.z, repeat_rows(d.q.logvar, k_prime), noise);
  const Tensor lme = add_scalar(row_logsumexp(reshape(add(d.recon, ratio), Shape{n, k_prime})),
                                -std::log(static_cast<double>(k_prime)));
  return {lme.data().begin(), lme.data().end()};
}

NllEstimate nll_estimate(const LatentVariableModel& model, const Tensor& data, std::size_t k_prime,
                         const nn::Rng& rng) {
  if (k_prime == 0) throw std::invalid_argument("nll_estimate: k_prime must be positive");
  if (data.numel() == 0 || data.rows() == 0) throw std::invalid_argument("nll_estimate: empty dataset");
  const Tensor x = as_matrix(data);
  const std::size_t n = x.rows();
  const std::size_t chunk = std::max<std::size_t>(1, kChunkSamples / k_prime);
  NllEstimate out;
  out.per_example.reserve(n);
  std::size_t c = 0;
  for (std::size_t begin = 0; begin < n; begin += chunk, ++c) {
    const std::size_t end = std::min(n, begin + chunk);
    nn::Rng r = rng.child("chunk", c);
    const Tensor noise = draw_noise(r, (end - begin) * k_prime, model.arch().latent_dim);
    for (double v : log_marginal_rows(model, x.slice_rows(begin, end), k_prime, noise)) {
      out.per_example.push_back(-v);
    }
  }
  double s = 0.0;
  for (double v : out.per_example) s += v;
  out.mean = s / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : out.per_example) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return out;
}

}  // namespace degm::vae
