#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "degm/data/dataset.hpp"

namespace degm::data {

class IdxBadMagicError : public DataError {
 public:
  using DataError::DataError;
};
class IdxTruncatedError : public DataError {
 public:
  using DataError::DataError;
};
class IdxCountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image file (big-endian magic 0x00000803, then n, rows, cols
/// as big-endian u32, then unsigned bytes) into pixels scaled by 1/255.
Dataset parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::optional<std::filesystem::path>& labels_path = std::nullopt);

}  // namespace degm::data
