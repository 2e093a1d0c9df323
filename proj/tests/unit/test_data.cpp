#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "degm/data/dataset.hpp"
#include "degm/data/idx.hpp"
#include "degm/data/stream.hpp"
#include "degm/data/synth.hpp"

using namespace degm::data;

namespace {

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(const std::vector<std::uint8_t>& payload, std::uint32_t n,
                                     std::uint32_t rows, std::uint32_t cols,
                                     std::uint32_t magic = kIdxImageMagic) {
  std::vector<std::uint8_t> out;
  for (auto v : {magic, n, rows, cols}) {
    auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void write(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("bars images have 1-3 full lines and nothing else") {
  const Dataset ds = synth_generate(Family::bars, 300, 12, 12, 4);
  validate(ds);
  const auto px = ds.images.data();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int full_rows = 0, full_cols = 0;
    std::vector<bool> covered(144, false);
    for (std::size_t r = 0; r < 12; ++r) {
      bool full = true;
      for (std::size_t c = 0; c < 12; ++c) full = full && px[i * 144 + r * 12 + c] == 1.0;
      if (full) {
        ++full_rows;
        for (std::size_t c = 0; c < 12; ++c) covered[r * 12 + c] = true;
      }
    }
    for (std::size_t c = 0; c < 12; ++c) {
      bool full = true;
      for (std::size_t r = 0; r < 12; ++r) full = full && px[i * 144 + r * 12 + c] == 1.0;
      if (full) {
        ++full_cols;
        for (std::size_t r = 0; r < 12; ++r) covered[r * 12 + c] = true;
      }
    }
    REQUIRE(full_rows + full_cols >= 1);
    REQUIRE(full_rows + full_cols <= 3);
    for (std::size_t j = 0; j < 144; ++j) REQUIRE(px[i * 144 + j] == (covered[j] ? 1.0 : 0.0));
  }
}

TEST_CASE("synthetic generation is seeded") {
  const Dataset a = synth_generate(Family::rings, 50, 12, 12, 9);
  const Dataset b = synth_generate(Family::rings, 50, 12, 12, 9);
  const Dataset c = synth_generate(Family::rings, 50, 12, 12, 10);
  CHECK(std::vector<double>(a.images.data().begin(), a.images.data().end()) ==
        std::vector<double>(b.images.data().begin(), b.images.data().end()));
  CHECK(std::vector<double>(a.images.data().begin(), a.images.data().end()) !=
        std::vector<double>(c.images.data().begin(), c.images.data().end()));
  CHECK_THROWS_AS(family_from_string("stripes"), DataError);
}

TEST_CASE("families are pairwise distinct in mean image") {
  const Family all[] = {Family::bars, Family::blobs, Family::checkers, Family::rings};
  std::vector<std::vector<double>> means;
  for (Family f : all) {
    means.push_back(mean_image(binarize(synth_generate(f, 2000, 12, 12, 3), BinarizeMode::threshold)));
  }
  const double bar = 0.1 * std::sqrt(144.0);
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      INFO(to_string(all[i]) << " vs " << to_string(all[j]) << " = " << l2(means[i], means[j]));
      CHECK(l2(means[i], means[j]) > bar);
    }
}

TEST_CASE("inverse domain") {
  const Dataset ds = synth_generate(Family::blobs, 20, 12, 12, 1);
  const Dataset inv = inverse_domain(ds);
  CHECK(inv.meta.name == "blobs-inv");
  const auto twice = inverse_domain(inv);
  for (std::size_t i = 0; i < ds.images.numel(); ++i) CHECK(twice.images.at(i) == doctest::Approx(ds.images.at(i)).epsilon(1e-15));
  Dataset zeros{degm::nn::Tensor::zeros({1, 16}), std::nullopt, {"z", 4, 4}};
  const Dataset ones = inverse_domain(zeros);
  for (double v : ones.images.data()) CHECK(v == 1.0);
  const auto m = mean_image(ds), mi = mean_image(inv);
  for (std::size_t j = 0; j < m.size(); ++j) CHECK(mi[j] == doctest::Approx(1.0 - m[j]));
}

TEST_CASE("binarize modes") {
  Dataset one{degm::nn::Tensor::matrix(1, 4, {0.7, 0.2, 0.5, 1.0}), std::nullopt, {"x", 2, 2}};
  const Dataset t = binarize(one, BinarizeMode::threshold);
  CHECK(t.images.at(0) == 1.0);
  CHECK(t.images.at(1) == 0.0);
  CHECK(t.images.at(2) == 1.0);
  const Dataset again = binarize(t, BinarizeMode::threshold);
  for (std::size_t i = 0; i < 4; ++i) CHECK(again.images.at(i) == t.images.at(i));

  // 1e4 stochastic draws of a 0.7 pixel: the binomial 3-sigma band is +/- 0.0137.
  Dataset grey{degm::nn::Tensor::full({10000, 1}, 0.7), std::nullopt, {"g", 1, 1}};
  const Dataset s = binarize(grey, BinarizeMode::stochastic, 5);
  CHECK(is_binary(s));
  const double mean = mean_image(s)[0];
  CHECK(mean > 0.7 - 0.015);
  CHECK(mean < 0.7 + 0.015);
}

TEST_CASE("split stream partitions by label") {
  Dataset train = concat({synth_generate(Family::bars, 30, 12, 12, 1),
                          synth_generate(Family::blobs, 20, 12, 12, 2),
                          synth_generate(Family::checkers, 10, 12, 12, 3),
                          synth_generate(Family::rings, 15, 12, 12, 4)},
                         "mix");
  Dataset test = concat({synth_generate(Family::bars, 5, 12, 12, 5),
                         synth_generate(Family::blobs, 5, 12, 12, 6),
                         synth_generate(Family::checkers, 5, 12, 12, 7),
                         synth_generate(Family::rings, 5, 12, 12, 8)},
                        "mix");
  const TaskStream s = make_split_stream({train, test}, {{0, 1}, {2, 3}});
  REQUIRE(s.size() == 2);
  CHECK(s.tasks[0].task_id == 1);
  CHECK(s.tasks[1].task_id == 2);
  CHECK(s.tasks[0].train.size() + s.tasks[1].train.size() == train.size());
  for (int l : *s.tasks[0].train.labels) CHECK((l == 0 || l == 1));
  for (int l : *s.tasks[1].train.labels) CHECK((l == 2 || l == 3));
  CHECK_THROWS_AS(make_split_stream({train, test}, {{0, 1}, {1, 2, 3}}), DataError);
  CHECK_THROWS_AS(make_split_stream({train, test}, {{0, 1}, {2}}), DataError);
  CHECK_THROWS_AS(make_split_stream({train, test}, {{0, 1}, {2, 3, 9}}), DataError);
}

TEST_CASE("cross-domain stream") {
  std::vector<DomainSpec> specs{DomainSpec::parse("bars"), DomainSpec::parse("blobs"),
                                DomainSpec::parse("bars-inv")};
  StreamGeometry geo;
  geo.train_size = 100;
  geo.test_size = 40;
  const TaskStream s = make_cross_domain_stream(specs, geo, 1);
  REQUIRE(s.size() == 3);
  CHECK(s.tasks[0].train.meta.name == "bars");
  CHECK(s.tasks[1].train.meta.name == "blobs");
  CHECK(s.tasks[2].train.meta.name == "bars-inv");
  for (const auto& t : s.tasks) {
    CHECK(t.train.dim() == 144);
    CHECK(t.train.size() == 100);
    CHECK(t.test.size() == 40);
    CHECK(is_binary(t.train));
    CHECK(is_binary(t.test));
  }
  const TaskStream again = make_cross_domain_stream(specs, geo, 1);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto a = s.tasks[t].train.images.data();
    const auto b = again.tasks[t].train.images.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  // Train and test come from different draws.
  const auto tr = s.tasks[1].train.images.data();
  const auto te = s.tasks[1].test.images.data();
  CHECK_FALSE(std::equal(te.begin(), te.end(), tr.begin()));
  CHECK_THROWS_AS(make_cross_domain_stream({DomainSpec::parse("bars")}, geo, 1), DataError);
}

TEST_CASE("IDX parsing") {
  const std::vector<std::uint8_t> payload{0, 255, 51, 102, 204, 0, 255, 153};
  const auto bytes = idx_images(payload, 2, 2, 2);
  const Dataset ds = parse_idx_images(bytes, "hand");
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 4);
  for (std::size_t i = 0; i < payload.size(); ++i) CHECK(ds.images.at(i) == payload[i] / 255.0);

  CHECK_THROWS_AS(parse_idx_images(idx_images(payload, 2, 2, 2, 0x00000804), "m"), IdxBadMagicError);
  auto short_bytes = bytes;
  short_bytes.pop_back();
  CHECK_THROWS_AS(parse_idx_images(short_bytes, "t"), IdxTruncatedError);

  const auto dir = std::filesystem::temp_directory_path() / "degm_idx_test";
  std::filesystem::create_directories(dir);
  write(dir / "img.idx", bytes);
  std::vector<std::uint8_t> labels = be32(kIdxLabelMagic);
  for (auto b : be32(2)) labels.push_back(b);
  labels.push_back(3);
  labels.push_back(7);
  write(dir / "lab.idx", labels);
  const Dataset loaded = load_idx(dir / "img.idx", dir / "lab.idx");
  REQUIRE(loaded.labels);
  CHECK((*loaded.labels == std::vector<int>{3, 7}));
  labels.pop_back();
  labels[7] = 1;
  write(dir / "lab1.idx", labels);
  CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "lab1.idx"), IdxCountMismatchError);
  std::filesystem::remove_all(dir);
}
