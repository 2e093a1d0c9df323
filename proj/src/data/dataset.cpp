#include "degm/data/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "degm/nn/rng.hpp"

namespace degm::data {

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  Dataset out{images.slice_rows(begin, end), std::nullopt, meta};
  if (labels) {
    out.labels = std::vector<int>(labels->begin() + static_cast<std::ptrdiff_t>(begin),
                                  labels->begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Dataset Dataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw DataError("gather: no rows selected from '" + meta.name + "'");
  const std::size_t d = dim();
  const auto src = images.data();
  std::vector<double> pixels;
  pixels.reserve(indices.size() * d);
  std::vector<int> picked;
  for (std::size_t idx : indices) {
    if (idx >= size()) throw DataError("gather: row index out of range");
    pixels.insert(pixels.end(), src.begin() + static_cast<std::ptrdiff_t>(idx * d),
                  src.begin() + static_cast<std::ptrdiff_t>((idx + 1) * d));
    if (labels) picked.push_back((*labels)[idx]);
  }
  Dataset out{nn::Tensor::matrix(indices.size(), d, std::move(pixels)), std::nullopt, meta};
  if (labels) out.labels = std::move(picked);
  return out;
}

void validate(const Dataset& ds) {
  if (ds.images.rank() != 2) throw DataError("dataset '" + ds.meta.name + "' must be [n, d]");
  if (ds.meta.width * ds.meta.height != ds.dim()) {
    throw DataError("dataset '" + ds.meta.name + "': d=" + std::to_string(ds.dim()) +
                    " != width*height=" + std::to_string(ds.meta.width * ds.meta.height));
  }
  for (double v : ds.images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError("dataset '" + ds.meta.name + "' has pixel values outside [0,1]");
    }
  }
  if (ds.labels && ds.labels->size() != ds.size()) {
    throw DataError("dataset '" + ds.meta.name + "' label count does not match image count");
  }
}

Dataset concat(const std::vector<Dataset>& parts, std::string name) {
  if (parts.empty()) throw DataError("concat: no parts");
  const std::size_t d = parts.front().dim();
  std::vector<double> pixels;
  std::vector<int> labels;
  bool all_labelled = true;
  std::size_t n = 0;
  for (const Dataset& p : parts) {
    if (p.dim() != d) throw DataError("concat: dimension mismatch in '" + p.meta.name + "'");
    pixels.insert(pixels.end(), p.images.data().begin(), p.images.data().end());
    all_labelled = all_labelled && p.labels.has_value();
    if (p.labels) labels.insert(labels.end(), p.labels->begin(), p.labels->end());
    n += p.size();
  }
  Dataset out{nn::Tensor::matrix(n, d, std::move(pixels)), std::nullopt,
              {std::move(name), parts.front().meta.width, parts.front().meta.height}};
  if (all_labelled) out.labels = std::move(labels);
  return out;
}

Dataset inverse_domain(const Dataset& ds) {
  std::vector<double> pixels(ds.images.data().begin(), ds.images.data().end());
  for (double& v : pixels) v = 1.0 - v;
  Dataset out{nn::Tensor(ds.images.shape(), std::move(pixels)), ds.labels, ds.meta};
  out.meta.name += "-inv";
  return out;
}

Dataset binarize(const Dataset& ds, BinarizeMode mode, std::uint64_t seed) {
  std::vector<double> pixels(ds.images.data().begin(), ds.images.data().end());
  if (mode == BinarizeMode::threshold) {
    for (double& v : pixels) v = v >= 0.5 ? 1.0 : 0.0;
  } else {
    nn::Rng rng(seed, "binarize/" + ds.meta.name);
    for (double& v : pixels) v = rng.bernoulli(v) ? 1.0 : 0.0;
  }
  return Dataset{nn::Tensor(ds.images.shape(), std::move(pixels)), ds.labels, ds.meta};
}

bool is_binary(const Dataset& ds) {
  return std::all_of(ds.images.data().begin(), ds.images.data().end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

std::vector<double> mean_image(const Dataset& ds) {
  const std::size_t d = ds.dim();
  std::vector<double> mean(d, 0.0);
  const auto px = ds.images.data();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += px[i * d + j];
  for (double& v : mean) v /= static_cast<double>(ds.size());
  return mean;
}

}  // namespace degm::data
