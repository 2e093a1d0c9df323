#include "degm/replay/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "degm/nn/errors.hpp"
#include "degm/vae/objectives.hpp"

namespace degm::replay {

using nn::Tensor;

PseudoDataset generate_pseudo(const vae::LatentVariableModel& model, std::size_t n, const nn::Rng& rng,
                              bool binarize, std::size_t source_task_count) {
  if (n == 0) throw std::invalid_argument("generate_pseudo: n must be positive");
  nn::NoGradGuard guard;
  nn::Rng zr = rng.child("z");
  const Tensor means = model.decode(vae::draw_noise(zr, n, model.arch().latent_dim));
  PseudoDataset out;
  out.source_task_count = source_task_count;
  out.generation_seed = rng.key();
  if (binarize && model.arch().observation.likelihood == vae::Likelihood::bernoulli) {
    nn::Rng pr = rng.child("pixels");
    std::vector<double> v(means.data().begin(), means.data().end());
    for (auto& p : v) p = pr.bernoulli(p) ? 1.0 : 0.0;
    out.samples = Tensor(means.shape(), std::move(v));
  } else {
    out.samples = means.detach();
  }
  return out;
}

std::size_t MixedDataset::count(Source s) const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), s));
}

MixedDataset mix_datasets(const std::optional<PseudoDataset>& replay, const Tensor& fresh, nn::Rng rng) {
  const std::size_t d = fresh.cols();
  const std::size_t n_new = fresh.rows();
  std::size_t n_rep = 0;
  if (replay) {
    if (replay->samples.cols() != d) {
      throw ShapeError("mix_datasets: replay width " + std::to_string(replay->samples.cols()) +
                       " vs fresh width " + std::to_string(d));
    }
    n_rep = replay->samples.rows();
  }
  MixedDataset out;
  out.flags.reserve(n_rep + n_new);
  std::vector<double> v;
  v.reserve((n_rep + n_new) * d);
  std::size_t i_rep = 0, i_new = 0;
  while (i_rep < n_rep || i_new < n_new) {
    bool take_replay;
    if (i_rep == n_rep) {
      take_replay = false;
    } else if (i_new == n_new) {
      take_replay = true;
    } else {
      take_replay = rng.bernoulli(0.5);
    }
    const auto src = take_replay ? replay->samples.data().subspan(i_rep++ * d, d)
                                 : fresh.data().subspan(i_new++ * d, d);
    v.insert(v.end(), src.begin(), src.end());
    out.flags.push_back(take_replay ? Source::replay : Source::fresh);
  }
  out.samples = Tensor::matrix(out.flags.size(), d, std::move(v));
  return out;
}

std::size_t replay_size(std::size_t seen, double ratio) {
  if (!(ratio >= 0.0)) throw std::invalid_argument("replay ratio must be non-negative");
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(seen)));
}

}  // namespace degm::replay
