#include <doctest.h>

#include <cmath>
#include <numbers>

#include "degm/data/synth.hpp"
#include "degm/nn/errors.hpp"
#include "degm/vae/objectives.hpp"
#include "degm/vae/vae.hpp"
#include "gradcheck.hpp"
#include "train_small.hpp"

using namespace degm;
using namespace degm::vae;
using nn::Shape;
using nn::Tensor;

namespace {

VaeArch tiny_arch(Likelihood l = Likelihood::bernoulli) {
  VaeArch a;
  a.data_dim = 6;
  a.encoder_hidden = {5};
  a.latent_dim = 2;
  a.decoder_hidden = {4};
  a.observation.likelihood = l;
  return a;
}

Tensor random_binary(std::size_t n, std::size_t d, std::uint64_t seed) {
  nn::Rng r(seed, "test/binary");
  std::vector<double> v(n * d);
  for (auto& e : v) e = r.bernoulli(0.4) ? 1.0 : 0.0;
  return Tensor::matrix(n, d, v);
}

void zero_layer(const nn::Mlp& m, std::size_t layer) {
  auto w = m.layers()[layer].weight;
  for (double& v : w.mutable_data()) v = 0.0;
}

void zero_all(const nn::Mlp& m) {
  for (auto p : m.parameters())
    for (double& v : p.mutable_data()) v = 0.0;
}

// Independent per-example ELBO oracle in plain doubles for the one-hidden-layer case.
double dense(const nn::Linear& l, const std::vector<double>& x, std::size_t j) {
  double s = l.bias.at(j);
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * l.weight.at(i * l.fan_out() + j);
  return s;
}

std::vector<double> layer(const nn::Linear& l, const std::vector<double>& x, double (*f)(double)) {
  std::vector<double> y(l.fan_out());
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = f(dense(l, x, j));
  return y;
}

double ident(double v) { return v; }
double tanh_(double v) { return std::tanh(v); }
double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("reparameterize") {
  const Tensor mu = Tensor::matrix(1, 2, {0.3, -1.2});
  const Tensor lv = Tensor::matrix(1, 2, {0.5, -0.7});
  const Tensor zero = Tensor::zeros({1, 2});
  const Tensor z0 = reparameterize(mu, lv, zero);
  CHECK(z0.at(0) == 0.3);
  CHECK(z0.at(1) == -1.2);
  const Tensor n = Tensor::matrix(1, 2, {0.9, -0.4});
  const Tensor z1 = reparameterize(zero, zero, n);
  CHECK(z1.at(0) == 0.9);
  CHECK(z1.at(1) == -0.4);
  const Tensor z2 = reparameterize(Tensor(Shape{1}, {1.0}), Tensor(Shape{1}, {std::log(4.0)}),
                                   Tensor(Shape{1}, {0.5}));
  CHECK(z2.at(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(reparameterize(mu, lv, Tensor::zeros({1, 3})), ShapeError);
}

TEST_CASE("gaussian KL closed form") {
  CHECK(gaussian_kl(Tensor::zeros({1, 3}), Tensor::zeros({1, 3})) == 0.0);
  CHECK(gaussian_kl(Tensor::matrix(1, 2, {1.0, 0.0}), Tensor::zeros({1, 2})) == doctest::Approx(0.5));
  // Batch mean of two examples.
  CHECK(gaussian_kl(Tensor::matrix(2, 1, {1.0, 0.0}), Tensor::zeros({2, 1})) == doctest::Approx(0.25));
}

TEST_CASE("gaussian KL agrees with Monte-Carlo at 3 standard errors") {
  nn::Rng rng(17, "test/kl");
  for (int c = 0; c < 50; ++c) {
    const std::size_t dim = 1 + rng.below(4);
    std::vector<double> mu(dim), lv(dim);
    for (auto& v : mu) v = rng.uniform(-2, 2);
    for (auto& v : lv) v = rng.uniform(-2, 1.5);
    const double analytic = gaussian_kl(Tensor::matrix(1, dim, mu), Tensor::matrix(1, dim, lv));
    REQUIRE(analytic >= 0.0);
    // log q(z) - log p(z) for z ~ q.
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double eps = rng.normal();
        const double z = mu[j] + std::exp(0.5 * lv[j]) * eps;
        v += -0.5 * eps * eps - 0.5 * lv[j] + 0.5 * z * z;
      }
      s += v;
      ss += v * v;
    }
    const double m = s / n;
    const double se = std::sqrt((ss / n - m * m) / (n - 1));
    CHECK_MESSAGE(std::abs(m - analytic) <= 3 * se, "case " << c << " analytic " << analytic << " mc " << m);
  }
}

TEST_CASE("reconstruction log-likelihoods") {
  const ObservationModel bern{Likelihood::bernoulli, false};
  const Tensor x = Tensor::matrix(1, 4, {0, 1, 1, 0});
  const Tensor y = Tensor::matrix(1, 4, {kProbClamp, 1 - kProbClamp, 1 - kProbClamp, kProbClamp});
  CHECK(recon_loglik(y, x, bern) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(recon_loglik(y, x, bern) <= 0.0);
  // Exact 0 and 1 outputs stay finite.
  const Tensor hard = Tensor::matrix(1, 4, {1, 0, 0, 1});
  CHECK(std::isfinite(recon_loglik(hard, x, bern)));
  CHECK_THROWS_AS(recon_loglik(y, Tensor::matrix(1, 4, {0, 1.5, 1, 0}), bern), DomainError);
  CHECK_THROWS_AS(recon_loglik(y, Tensor::zeros({1, 3}), bern), ShapeError);

  const Tensor g = Tensor::matrix(1, 4, {0.2, 0.5, 0.1, 0.9});
  CHECK(recon_loglik(g, g, {Likelihood::gaussian_half, false}) ==
        doctest::Approx(-2.0 * std::log(std::numbers::pi)));
  CHECK(recon_loglik(g, g, {Likelihood::gaussian_half, false}) == doctest::Approx(-2.2895).epsilon(1e-4));
  const Tensor shifted = Tensor::matrix(1, 4, {1.2, 0.5, 0.1, 0.9});
  CHECK(recon_loglik(shifted, g, {Likelihood::gaussian_identity, false}) ==
        doctest::Approx(-0.5 - 2.0 * std::log(2.0 * std::numbers::pi)));
  CHECK(recon_loglik(shifted, g, {Likelihood::gaussian_identity, true}) ==
        doctest::Approx((-0.5 - 2.0 * std::log(2.0 * std::numbers::pi)) / 4.0));
}

TEST_CASE("architecture validation and parameter count") {
  VaeArch a;
  CHECK_NOTHROW(a.validate());
  const VaeModel m = build_vae(a, 1);
  CHECK(m.parameter_count() == (144 * 128 + 128) + 2 * (128 * 16 + 16) + (16 * 128 + 128) + (128 * 144 + 144));
  a.latent_dim = 200;
  CHECK_THROWS_AS(a.validate(), InvalidSpecError);
  VaeArch b;
  b.decoder_hidden = {144};
  CHECK_THROWS_AS(b.validate(), InvalidSpecError);
  CHECK_THROWS_AS(likelihood_from_string("poisson"), InvalidSpecError);
}

TEST_CASE("elbo decomposes into reconstruction and KL") {
  const VaeModel m = build_vae(tiny_arch(), 3);
  zero_layer(m.decoder_trunk(), 0);
  const Tensor x = random_binary(5, 6, 1);
  nn::Rng rng(1, "noise");
  const ElboEstimate e = elbo(m, x, 1, rng);
  CHECK(e.total == e.recon_term - e.kl_term);
  CHECK(e.kl_term >= 0.0);
  CHECK(e.n_data == 5);

  // Decoder output is independent of z: recon is the direct Bernoulli log-likelihood.
  const auto& out = m.decoder_out().layers()[0];
  std::vector<double> y(6);
  const std::vector<double> h(4, 0.0);
  for (std::size_t j = 0; j < 6; ++j) y[j] = std::clamp(sigm(dense(out, h, j)), kProbClamp, 1 - kProbClamp);
  double direct = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double v = x.at(i * 6 + j);
      direct += v * std::log(y[j]) + (1 - v) * std::log(1 - y[j]);
    }
  CHECK(e.recon_term == doctest::Approx(direct / 5).epsilon(1e-12));
  const Posterior q = m.posterior(x);
  CHECK(e.kl_term == doctest::Approx(gaussian_kl(q.mu, q.logvar)).epsilon(1e-14));
}

TEST_CASE("elbo matches an independent scalar implementation") {
  const VaeModel m = build_vae(tiny_arch(), 8);
  const Tensor x = random_binary(3, 6, 2);
  nn::Rng rng(5, "noise");
  const Tensor noise = draw_noise(rng, 3, 2);
  const ElboEstimate e = elbo(m, x, 1, noise);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> xi(x.data().begin() + i * 6, x.data().begin() + (i + 1) * 6);
    const auto h = layer(m.encoder_trunk().layers()[0], xi, tanh_);
    const auto mu = layer(m.mean_head().layers()[0], h, ident);
    const auto lv = layer(m.logvar_head().layers()[0], h, ident);
    std::vector<double> z(2);
    double kl = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      z[j] = mu[j] + std::exp(0.5 * lv[j]) * noise.at(i * 2 + j);
      kl += 0.5 * (mu[j] * mu[j] + std::exp(lv[j]) - lv[j] - 1);
    }
    const auto y = layer(m.decoder_out().layers()[0], layer(m.decoder_trunk().layers()[0], z, tanh_), sigm);
    double rec = 0.0;
    for (std::size_t j = 0; j < 6; ++j) rec += xi[j] * std::log(y[j]) + (1 - xi[j]) * std::log(1 - y[j]);
    CHECK(e.per_example[i] == doctest::Approx(rec - kl).epsilon(1e-12));
  }
}

TEST_CASE("iwelbo with one sample equals elbo under shared noise") {
  for (auto l : {Likelihood::bernoulli, Likelihood::gaussian_half, Likelihood::gaussian_identity}) {
    const VaeModel m = build_vae(tiny_arch(l), 4);
    const Tensor x = random_binary(7, 6, 3);
    nn::Rng rng(2, "noise");
    const Tensor noise = draw_noise(rng, 7, 2);
    const ElboEstimate a = elbo(m, x, 1, noise);
    const ElboEstimate b = iwelbo(m, x, 1, noise);
    CHECK(a.total == b.total);
    CHECK(a.per_example == b.per_example);
    CHECK(a.recon_term == b.recon_term);
    CHECK(a.kl_term == b.kl_term);
  }
  const VaeModel m = build_vae(tiny_arch(), 4);
  nn::Rng rng(2, "noise");
  CHECK_THROWS_AS(iwelbo(m, random_binary(2, 6, 1), 0, rng), std::invalid_argument);
}

TEST_CASE("iwelbo is constant in K' when q equals the prior and the decoder ignores z") {
  const VaeModel m = build_vae(tiny_arch(), 6);
  zero_all(m.mean_head());
  zero_all(m.logvar_head());
  zero_layer(m.decoder_trunk(), 0);
  const Tensor x = random_binary(4, 6, 9);
  nn::Rng rng(3, "noise");
  const double base = iwelbo(m, x, 1, rng).total;
  for (std::size_t k : {2, 5, 50}) CHECK(iwelbo(m, x, k, rng).total == doctest::Approx(base).epsilon(1e-12));
  CHECK(nll_estimate(m, x, 20, rng).mean == doctest::Approx(-base).epsilon(1e-12));
}

TEST_CASE("objective gradients match finite differences") {
  for (auto l : {Likelihood::bernoulli, Likelihood::gaussian_half}) {
    const VaeModel m = build_vae(tiny_arch(l), 12);
    const Tensor x = random_binary(3, 6, 4);
    nn::Rng rng(4, "noise");
    const Tensor n1 = draw_noise(rng, 6, 2);
    const Tensor n4 = draw_noise(rng, 12, 2);
    auto r1 = testing::grad_check([&] { return elbo(m, x, 2, n1).objective; }, m.parameters());
    CHECK_MESSAGE(r1.ok, "elbo rel " << r1.max_relative_error);
    CHECK(r1.kinks == 0);
    auto r2 = testing::grad_check([&] { return iwelbo(m, x, 4, n4).objective; }, m.parameters());
    CHECK_MESSAGE(r2.ok, "iwelbo rel " << r2.max_relative_error);
    CHECK(r2.kinks == 0);
  }
}

TEST_CASE("row order does not change keyed noise") {
  const Tensor x = random_binary(4, 6, 5);
  const nn::Rng base(1, "keyed");
  const Tensor a = keyed_noise(x, 3, 2, base);
  const Tensor xr = Tensor::matrix(4, 6, [&] {
    std::vector<double> v;
    for (std::size_t i : {3, 2, 1, 0}) v.insert(v.end(), x.data().begin() + i * 6, x.data().begin() + (i + 1) * 6);
    return v;
  }());
  const Tensor b = keyed_noise(xr, 3, 2, base);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(a.at(i * 6 + j) == b.at((3 - i) * 6 + j));
}

TEST_CASE("bounds order on a trained model") {
  VaeArch arch;
  const auto train = data::binarize(data::synth_generate(data::Family::bars, 600, 12, 12, 1),
                                    data::BinarizeMode::threshold);
  const auto test = data::binarize(data::synth_generate(data::Family::bars, 100, 12, 12, 2),
                                   data::BinarizeMode::threshold);
  VaeModel m = build_vae(arch, 5);
  testing::train_small(m, train.images, 4, 50, 1);

  const nn::Rng base(7, "test/order");
  const auto e = [&](std::size_t r) {
    nn::Rng g = base.child("elbo", r);
    nn::NoGradGuard guard;
    return elbo(m, test.images, 1, g).total;
  };
  const auto iw = [&](std::size_t k, std::size_t r) {
    nn::Rng g = base.child("iw" + std::to_string(k), r);
    nn::NoGradGuard guard;
    return iwelbo(m, test.images, k, g).total;
  };
  double d1 = 0, d1s = 0, d2 = 0, d2s = 0;
  const std::size_t reps = 30;
  for (std::size_t r = 0; r < reps; ++r) {
    const double a = e(r), b = iw(5, r), c = iw(50, r);
    d1 += b - a;
    d1s += (b - a) * (b - a);
    d2 += c - b;
    d2s += (c - b) * (c - b);
  }
  const auto tstat = [&](double s, double ss) {
    const double m = s / reps;
    return m / std::sqrt((ss / reps - m * m) / (reps - 1));
  };
  CHECK(tstat(d1, d1s) > 2.462);
  CHECK(tstat(d2, d2s) > 2.462);

  // Importance-weighted log-likelihood is monotone in K' and dominates the ELBO.
  double prev = 1e300;
  for (std::size_t k : {1, 5, 50, 500}) {
    const auto n = nll_estimate(m, test.images, k, base.child("nll", k));
    CHECK(n.mean <= prev + 3 * n.std_error);
    prev = n.mean;
  }
  const auto big = nll_estimate(m, test.images, 2000, base.child("nll-big"));
  CHECK(-e(0) >= big.mean - 3 * big.std_error);
  CHECK_THROWS_AS(nll_estimate(m, Tensor::zeros({0, 144}), 5, base), std::invalid_argument);
}
