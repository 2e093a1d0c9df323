#include "degm/bounds/risk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "degm/nn/errors.hpp"

namespace degm::bounds {

using nn::Tensor;

double squared_loss(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("squared_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s;
}

std::vector<double> squared_loss_rows(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("squared_loss: " + nn::shape_str(a.shape()) + " vs " + nn::shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = squared_loss(a.data().subspan(i * d, d), b.data().subspan(i * d, d));
  }
  return out;
}

Hypothesis reconstruction_hypothesis(std::shared_ptr<const vae::VaeModel> model, std::string label) {
  return {std::move(label), [model](const Tensor& x) {
            nn::NoGradGuard guard;
            return model->reconstruct(x);
          }};
}

Hypothesis identity_hypothesis() {
  return {"identity", [](const Tensor& x) { return x; }};
}

namespace {

void require_nonempty(const Tensor& x, const char* op) {
  if (x.numel() == 0) throw std::invalid_argument(std::string(op) + ": empty dataset");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e;
  return s / static_cast<double>(v.size());
}

}  // namespace

PoolOutputs apply_pool(const HypothesisPool& pool, const Tensor& data) {
  PoolOutputs out;
  out.reserve(pool.size());
  for (const auto& h : pool) out.push_back(h.apply(data));
  return out;
}

double risk(const Hypothesis& h, const Tensor& data, const Hypothesis* reference, bool normalize) {
  require_nonempty(data, "risk");
  const Tensor target = reference ? reference->apply(data) : data;
  const double r = mean_of(squared_loss_rows(h.apply(data), target));
  return normalize ? r / static_cast<double>(data.cols()) : r;
}

double empirical_discrepancy(const Tensor& set_p, const Tensor& set_q, const HypothesisPool& pool,
                             bool normalize) {
  require_nonempty(set_p, "empirical_discrepancy");
  require_nonempty(set_q, "empirical_discrepancy");
  if (pool.size() < 2) throw std::invalid_argument("empirical_discrepancy: pool needs at least two hypotheses");
  return discrepancy_from_outputs(apply_pool(pool, set_p), apply_pool(pool, set_q), normalize);
}

double discrepancy_from_outputs(const PoolOutputs& out_p, const PoolOutputs& out_q, bool normalize) {
  if (out_p.size() != out_q.size()) throw std::invalid_argument("discrepancy: output lists differ in length");
  if (out_p.size() < 2) throw std::invalid_argument("empirical_discrepancy: pool needs at least two hypotheses");
  require_nonempty(out_p.front(), "empirical_discrepancy");
  require_nonempty(out_q.front(), "empirical_discrepancy");
  double best = 0.0;
  for (std::size_t i = 0; i < out_p.size(); ++i) {
    for (std::size_t j = i + 1; j < out_p.size(); ++j) {
      const double gap = std::abs(mean_of(squared_loss_rows(out_p[j], out_p[i])) -
                                  mean_of(squared_loss_rows(out_q[j], out_q[i])));
      best = std::max(best, gap);
    }
  }
  return normalize ? best / static_cast<double>(out_p.front().cols()) : best;
}

double discrepancy_slack(std::size_t m_p, std::size_t m_q, double bound_m, double delta, double rad_p,
                         double rad_q) {
  if (m_p == 0 || m_q == 0) throw std::invalid_argument("discrepancy_slack: sample sizes must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("discrepancy_slack: delta outside (0, 1)");
  if (!(bound_m > 0.0)) throw std::invalid_argument("discrepancy_slack: M must be positive");
  const double l = std::log(4.0 / delta);
  return 8.0 * (rad_p + rad_q) +
         3.0 * bound_m * (std::sqrt(l / (2.0 * static_cast<double>(m_p))) +
                          std::sqrt(l / (2.0 * static_cast<double>(m_q))));
}

double rademacher_estimate(const Tensor& data, const HypothesisPool& pool, std::size_t n_sign_draws,
                           const nn::Rng& rng, bool normalize) {
  if (pool.empty()) throw std::invalid_argument("rademacher_estimate: empty pool");
  require_nonempty(data, "rademacher_estimate");
  if (n_sign_draws == 0) return 0.0;
  return rademacher_from_outputs(apply_pool(pool, data), n_sign_draws, rng, normalize);
}

double rademacher_from_outputs(const PoolOutputs& outs, std::size_t n_sign_draws, const nn::Rng& rng,
                               bool normalize) {
  if (outs.empty()) throw std::invalid_argument("rademacher_estimate: empty pool");
  require_nonempty(outs.front(), "rademacher_estimate");
  if (n_sign_draws == 0) return 0.0;
  std::vector<std::vector<double>> losses;
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j) losses.push_back(squared_loss_rows(outs[j], outs[i]));
  const std::size_t m = outs.front().rows();
  double total = 0.0;
  std::vector<double> sigma(m);
  for (std::size_t s = 0; s < n_sign_draws; ++s) {
    nn::Rng r = rng.child("signs", s);
    for (auto& v : sigma) v = r.bernoulli(0.5) ? 1.0 : -1.0;
    double best = 0.0;  // the diagonal pairs contribute exactly 0
    for (const auto& l : losses) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += sigma[i] * l[i];
      best = std::max(best, std::abs(acc) / static_cast<double>(m));
    }
    total += best;
  }
  const double est = total / static_cast<double>(n_sign_draws);
  return normalize ? est / static_cast<double>(outs.front().cols()) : est;
}

}  // namespace degm::bounds
