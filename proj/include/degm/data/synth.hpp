#pragma once

#include <cstdint>
#include <string>

#include "degm/data/dataset.hpp"

namespace degm::data {

/// Desk-scale synthetic image domains.
///  - bars: 1-3 full-intensity rows or columns on black
///  - blobs: one soft Gaussian blob near the centre
///  - checkers: checkerboard with random cell size and phase
///  - rings: one annulus with random centre and radius
enum class Family { bars, blobs, checkers, rings };

std::string to_string(Family f);
/// Throws DataError on an unknown name.
Family family_from_string(const std::string& name);

/// Labels are set to the family index for every image, so several families
/// can be concatenated into one labelled set.
Dataset synth_generate(Family family, std::size_t n, std::size_t width, std::size_t height,
                       std::uint64_t seed);

}  // namespace degm::data
