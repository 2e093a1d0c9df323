#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "degm/nn/tensor.hpp"

namespace degm::data {

/// Base for data ingestion and construction failures.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetMeta {
  std::string name;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// n images of d = width * height pixels in [0, 1], stored as an [n, d] tensor.
struct Dataset {
  nn::Tensor images;
  std::optional<std::vector<int>> labels;
  DatasetMeta meta;

  [[nodiscard]] std::size_t size() const { return images.rows(); }
  [[nodiscard]] std::size_t dim() const { return images.cols(); }
  /// Rows [begin, end) with matching labels.
  [[nodiscard]] Dataset slice(std::size_t begin, std::size_t end) const;
  /// Rows in the given order.
  [[nodiscard]] Dataset gather(const std::vector<std::size_t>& indices) const;
};

/// Validates d == width * height and values in [0, 1].
void validate(const Dataset& ds);

Dataset concat(const std::vector<Dataset>& parts, std::string name);

enum class BinarizeMode { threshold, stochastic };

/// Pixel-wise 1 - x; the name gets a "-inv" suffix.
Dataset inverse_domain(const Dataset& ds);

/// threshold: x >= 0.5 -> 1; stochastic: Bernoulli(x) per pixel from the
/// stream (seed, "binarize/<name>").
Dataset binarize(const Dataset& ds, BinarizeMode mode, std::uint64_t seed = 0);

bool is_binary(const Dataset& ds);

/// Per-pixel mean image.
std::vector<double> mean_image(const Dataset& ds);

}  // namespace degm::data
