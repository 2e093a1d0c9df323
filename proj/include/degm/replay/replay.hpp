#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "degm/nn/rng.hpp"
#include "degm/nn/tensor.hpp"
#include "degm/vae/vae.hpp"

namespace degm::replay {

struct PseudoDataset {
  nn::Tensor samples;
  /// Number of tasks the generator had seen.
  std::size_t source_task_count = 0;
  /// Key of the stream the samples were drawn from.
  std::uint64_t generation_seed = 0;
};

/// Decodes n prior draws z ~ N(0, I). Bernoulli models emit decoder means, or
/// per-pixel Bernoulli draws of them when `binarize`; Gaussian models emit
/// means. Latents come from rng.child("z"), pixels from rng.child("pixels").
/// Throws std::invalid_argument for n == 0.
PseudoDataset generate_pseudo(const vae::LatentVariableModel& model, std::size_t n, const nn::Rng& rng,
                              bool binarize = true, std::size_t source_task_count = 0);

enum class Source : std::uint8_t { replay, fresh };

struct MixedDataset {
  nn::Tensor samples;
  std::vector<Source> flags;

  [[nodiscard]] std::size_t size() const { return flags.size(); }
  [[nodiscard]] std::size_t count(Source s) const;
};

/// Each output row comes from the replay or the fresh source with probability
/// 1/2 (one coin per row); each source is consumed in order without
/// replacement, and once one is exhausted the other fills the remainder.
/// Output size is |replay| + |fresh|. Throws ShapeError on width mismatch.
MixedDataset mix_datasets(const std::optional<PseudoDataset>& replay, const nn::Tensor& fresh, nn::Rng rng);

/// round(ratio * seen) with ratio >= 0.
std::size_t replay_size(std::size_t seen, double ratio);

}  // namespace degm::replay
