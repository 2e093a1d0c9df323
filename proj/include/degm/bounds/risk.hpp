#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/vae.hpp"

namespace degm::bounds {

/// sum_i (x_i - y_i)^2. Throws ShapeError on length mismatch.
double squared_loss(std::span<const double> x, std::span<const double> y);
/// Row-wise squared loss of two [n, d] tensors, [n].
std::vector<double> squared_loss_rows(const nn::Tensor& a, const nn::Tensor& b);

/// A map X -> X evaluated row-wise on [n, d] batches without history.
struct Hypothesis {
  std::string label;
  std::function<nn::Tensor(const nn::Tensor&)> apply;
};

/// h(x) = decode(mu(x)) of a frozen snapshot.
Hypothesis reconstruction_hypothesis(std::shared_ptr<const vae::VaeModel> model, std::string label);
Hypothesis identity_hypothesis();

using HypothesisPool = std::vector<Hypothesis>;

/// Mean squared loss between h(x) and the reference: x itself when
/// `reference` is null, otherwise reference(x). Divided by d when normalize.
/// Throws std::invalid_argument on an empty dataset.
double risk(const Hypothesis& h, const nn::Tensor& data, const Hypothesis* reference = nullptr,
            bool normalize = false);

/// max over pool pairs (h, h') of |E_P L(h'(x), h(x)) - E_Q L(h'(x), h(x))|.
/// The loss is symmetric in (h, h') and vanishes on the diagonal, so the
/// maximum over unordered pairs equals the maximum over ordered ones.
/// Throws std::invalid_argument for an empty set or a pool of fewer than two.
double empirical_discrepancy(const nn::Tensor& set_p, const nn::Tensor& set_q,
                             const HypothesisPool& pool, bool normalize = false);

/// Pool outputs on one set, one [n, d] tensor per hypothesis in pool order.
using PoolOutputs = std::vector<nn::Tensor>;
PoolOutputs apply_pool(const HypothesisPool& pool, const nn::Tensor& data);

/// empirical_discrepancy from precomputed outputs; the two lists align by hypothesis.
double discrepancy_from_outputs(const PoolOutputs& out_p, const PoolOutputs& out_q, bool normalize = false);

/// 8 (rad_p + rad_q) + 3 M (sqrt(log(4/delta) / 2 m_p) + sqrt(log(4/delta) / 2 m_q)).
/// Throws std::invalid_argument unless m_p, m_q >= 1, M > 0 and 0 < delta < 1.
double discrepancy_slack(std::size_t m_p, std::size_t m_q, double bound_m, double delta,
                         double rad_p, double rad_q);

/// Finite-pool Rademacher surrogate: the mean over sign draws sigma of
/// max over pairs (h, h') of (1/m) |sum_i sigma_i L(h'(x_i), h(x_i))|.
/// Sign draw s comes from rng.child("signs", s).
double rademacher_estimate(const nn::Tensor& data, const HypothesisPool& pool,
                           std::size_t n_sign_draws, const nn::Rng& rng, bool normalize = false);
double rademacher_from_outputs(const PoolOutputs& outs, std::size_t n_sign_draws, const nn::Rng& rng,
                               bool normalize = false);

}  // namespace degm::bounds
