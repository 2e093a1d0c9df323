#include "degm/data/idx.hpp"

#include <fstream>
#include <iterator>

namespace degm::data {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open IDX file '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < 4) throw IdxTruncatedError("IDX image file '" + name + "': missing magic");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw IdxBadMagicError("IDX image file '" + name + "': bad magic " + std::to_string(magic));
  }
  if (bytes.size() < 16) throw IdxTruncatedError("IDX image file '" + name + "': short header");
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (n == 0 || rows == 0 || cols == 0) {
    throw DataError("IDX image file '" + name + "': zero dimension");
  }
  const std::size_t d = rows * cols;
  if (bytes.size() - 16 < n * d) {
    throw IdxTruncatedError("IDX image file '" + name + "': payload has " +
                            std::to_string(bytes.size() - 16) + " bytes, expected " +
                            std::to_string(n * d));
  }
  std::vector<double> pixels(n * d);
  for (std::size_t i = 0; i < n * d; ++i) pixels[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  return Dataset{nn::Tensor::matrix(n, d, std::move(pixels)), std::nullopt, {name, cols, rows}};
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IdxTruncatedError("IDX label file: missing magic");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) {
    throw IdxBadMagicError("IDX label file: bad magic " + std::to_string(magic));
  }
  if (bytes.size() < 8) throw IdxTruncatedError("IDX label file: short header");
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() - 8 < n) {
    throw IdxTruncatedError("IDX label file: payload has " + std::to_string(bytes.size() - 8) +
                            " bytes, expected " + std::to_string(n));
  }
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::optional<std::filesystem::path>& labels_path) {
  const auto image_bytes = read_file(images_path);
  Dataset ds = parse_idx_images(image_bytes, images_path.stem().string());
  if (labels_path) {
    auto labels = parse_idx_labels(read_file(*labels_path));
    if (labels.size() != ds.size()) {
      throw IdxCountMismatchError("IDX label count " + std::to_string(labels.size()) +
                                  " != image count " + std::to_string(ds.size()) + " ('" +
                                  labels_path->string() + "')");
    }
    ds.labels = std::move(labels);
  }
  return ds;
}

}  // namespace degm::data
