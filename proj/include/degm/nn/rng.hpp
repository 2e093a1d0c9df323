#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace degm::nn {

/// Counter-based random stream.
///
/// A stream is identified by a 64-bit key derived from the run seed and a
/// textual label ("init/node3/layer0", "shuffle/task2/epoch4", ...). Output i
/// of a stream is a pure function of (key, i), so every stochastic site can
/// own an independent stream and adding a new site never shifts the draws of
/// an existing one.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::string_view label);

  /// Independent sub-stream keyed by this stream's key and `label`.
  [[nodiscard]] Rng child(std::string_view label) const;
  [[nodiscard]] Rng child(std::string_view label, std::uint64_t index) const;

  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a_bytes(const void* data, std::size_t size,
                          std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace degm::nn
