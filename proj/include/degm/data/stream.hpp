#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "degm/data/dataset.hpp"
#include "degm/data/synth.hpp"

namespace degm::data {

struct Task {
  int task_id = 0;
  Dataset train;
  Dataset test;
};

enum class StreamKind { split, cross_domain };

/// Ordered tasks with ids 1..N.
struct TaskStream {
  std::vector<Task> tasks;
  StreamKind kind = StreamKind::cross_domain;

  [[nodiscard]] std::size_t size() const { return tasks.size(); }
  [[nodiscard]] std::size_t dim() const { return tasks.front().train.dim(); }
};

struct TrainTestPair {
  Dataset train;
  Dataset test;
};

/// One task per label group; groups must be disjoint and cover labels present.
TaskStream make_split_stream(const TrainTestPair& data, const std::vector<std::set<int>>& groups);

/// A cross-domain task source: either a synthetic family or user IDX files.
struct DomainSpec {
  std::optional<Family> family;
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
  std::optional<std::set<int>> label_filter;
  bool inverse = false;

  /// "bars", "blobs-inv", ...
  static DomainSpec parse(const std::string& text);
  [[nodiscard]] std::string name() const;
};

struct StreamGeometry {
  std::size_t width = 12;
  std::size_t height = 12;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  BinarizeMode binarize = BinarizeMode::threshold;
};

/// Builds tasks in the order of `specs`. Train and test of task t come from the
/// streams (seed, "task{t}/train") and (seed, "task{t}/test").
TaskStream make_cross_domain_stream(const std::vector<DomainSpec>& specs,
                                    const StreamGeometry& geometry, std::uint64_t seed);

}  // namespace degm::data
