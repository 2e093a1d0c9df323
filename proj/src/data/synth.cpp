#include "degm/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "degm/nn/rng.hpp"

namespace degm::data {

namespace {

using Image = std::vector<double>;

void draw_bars(Image& img, std::size_t w, std::size_t h, nn::Rng& rng) {
  const std::uint64_t count = 1 + rng.below(3);
  for (std::uint64_t b = 0; b < count; ++b) {
    if (rng.bernoulli(0.5)) {
      const std::size_t row = rng.below(h);
      for (std::size_t x = 0; x < w; ++x) img[row * w + x] = 1.0;
    } else {
      const std::size_t col = rng.below(w);
      for (std::size_t y = 0; y < h; ++y) img[y * w + col] = 1.0;
    }
  }
}

// Single soft blob near the image centre.
void draw_blob(Image& img, std::size_t w, std::size_t h, nn::Rng& rng) {
  const double cx = 0.5 * static_cast<double>(w - 1) + rng.uniform(-2.5, 2.5);
  const double cy = 0.5 * static_cast<double>(h - 1) + rng.uniform(-2.5, 2.5);
  const double sigma = rng.uniform(1.5, 2.6);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      img[y * w + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
}

void draw_checkers(Image& img, std::size_t w, std::size_t h, nn::Rng& rng) {
  const std::size_t cell = 2 + rng.below(3);
  const std::size_t ox = rng.below(cell), oy = rng.below(cell);
  const std::size_t parity = rng.below(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img[y * w + x] = static_cast<double>(((x + ox) / cell + (y + oy) / cell + parity) % 2);
}

// Annulus around the centre; the hole keeps its mean image far from blobs.
void draw_ring(Image& img, std::size_t w, std::size_t h, nn::Rng& rng) {
  const double cx = 0.5 * static_cast<double>(w - 1) + rng.uniform(-1.5, 1.5);
  const double cy = 0.5 * static_cast<double>(h - 1) + rng.uniform(-1.5, 1.5);
  const double scale = static_cast<double>(std::min(w, h)) / 12.0;
  const double radius = scale * rng.uniform(3.0, 4.8);
  const double width = 0.7 * scale;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double off = std::sqrt(dx * dx + dy * dy) - radius;
      img[y * w + x] = std::exp(-off * off / (2.0 * width * width));
    }
  }
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::bars: return "bars";
    case Family::blobs: return "blobs";
    case Family::checkers: return "checkers";
    case Family::rings: return "rings";
  }
  return "bars";
}

Family family_from_string(const std::string& name) {
  if (name == "bars") return Family::bars;
  if (name == "blobs") return Family::blobs;
  if (name == "checkers") return Family::checkers;
  if (name == "rings") return Family::rings;
  throw DataError("unknown synthetic family '" + name + "'");
}

Dataset synth_generate(Family family, std::size_t n, std::size_t width, std::size_t height,
                       std::uint64_t seed) {
  if (n == 0) throw DataError("synth_generate: n must be at least 1");
  if (width < 4 || height < 4) throw DataError("synth_generate: images must be at least 4x4");
  const std::size_t d = width * height;
  nn::Rng rng(seed, "synth/" + to_string(family));
  std::vector<double> pixels(n * d, 0.0);
  Image img(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(img.begin(), img.end(), 0.0);
    switch (family) {
      case Family::bars: draw_bars(img, width, height, rng); break;
      case Family::blobs: draw_blob(img, width, height, rng); break;
      case Family::checkers: draw_checkers(img, width, height, rng); break;
      case Family::rings: draw_ring(img, width, height, rng); break;
    }
    std::copy(img.begin(), img.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Dataset{nn::Tensor::matrix(n, d, std::move(pixels)),
                 std::vector<int>(n, static_cast<int>(family)),
                 {to_string(family), width, height}};
}

}  // namespace degm::data
