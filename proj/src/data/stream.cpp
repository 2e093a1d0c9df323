#include "degm/data/stream.hpp"

#include <algorithm>
#include <filesystem>

#include "degm/data/idx.hpp"
#include "degm/nn/rng.hpp"

namespace degm::data {

namespace {

Dataset filter_labels(const Dataset& ds, const std::set<int>& keep, const std::string& name) {
  if (!ds.labels) throw DataError("dataset '" + ds.meta.name + "' has no labels to split on");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (keep.count((*ds.labels)[i])) rows.push_back(i);
  if (rows.empty()) throw DataError("no samples with labels of group '" + name + "'");
  Dataset out = ds.gather(rows);
  out.meta.name = name;
  return out;
}

std::string group_name(const std::string& base, const std::set<int>& group) {
  std::string name = base + "[";
  bool first = true;
  for (int l : group) {
    name += (first ? "" : ",") + std::to_string(l);
    first = false;
  }
  return name + "]";
}

Dataset cap(const Dataset& ds, std::size_t limit) {
  return (limit > 0 && ds.size() > limit) ? ds.slice(0, limit) : ds;
}

}  // namespace

TaskStream make_split_stream(const TrainTestPair& data, const std::vector<std::set<int>>& groups) {
  if (groups.empty()) throw DataError("split stream needs at least one label group");
  if (!data.train.labels || !data.test.labels) throw DataError("split stream needs labelled data");
  std::set<int> covered;
  for (const auto& g : groups) {
    if (g.empty()) throw DataError("split stream: empty label group");
    for (int l : g) {
      if (!covered.insert(l).second) {
        throw DataError("split stream: label " + std::to_string(l) + " appears in two groups");
      }
    }
  }
  const std::set<int> present(data.train.labels->begin(), data.train.labels->end());
  for (int l : present) {
    if (!covered.count(l)) throw DataError("split stream: label " + std::to_string(l) + " is in no group");
  }
  for (int l : covered) {
    if (!present.count(l)) throw DataError("split stream: label " + std::to_string(l) + " missing from data");
  }

  TaskStream stream;
  stream.kind = StreamKind::split;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string name = group_name(data.train.meta.name, groups[i]);
    stream.tasks.push_back({static_cast<int>(i + 1), filter_labels(data.train, groups[i], name),
                            filter_labels(data.test, groups[i], name)});
  }
  return stream;
}

DomainSpec DomainSpec::parse(const std::string& text) {
  DomainSpec spec;
  std::string base = text;
  const std::string suffix = "-inv";
  if (base.size() > suffix.size() && base.ends_with(suffix)) {
    spec.inverse = true;
    base.resize(base.size() - suffix.size());
  }
  spec.family = family_from_string(base);
  return spec;
}

std::string DomainSpec::name() const {
  std::string base = family ? to_string(*family) : std::filesystem::path(idx_train_images).stem().string();
  return inverse ? base + "-inv" : base;
}

TaskStream make_cross_domain_stream(const std::vector<DomainSpec>& specs,
                                    const StreamGeometry& geometry, std::uint64_t seed) {
  if (specs.size() < 2) throw DataError("cross-domain stream needs at least two domains");
  TaskStream stream;
  stream.kind = StreamKind::cross_domain;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const DomainSpec& spec = specs[i];
    const int task_id = static_cast<int>(i + 1);
    Dataset train, test;
    if (spec.family) {
      const nn::Rng task_rng(seed, "task" + std::to_string(task_id));
      train = synth_generate(*spec.family, geometry.train_size, geometry.width, geometry.height,
                             task_rng.child("train").key());
      test = synth_generate(*spec.family, geometry.test_size, geometry.width, geometry.height,
                            task_rng.child("test").key());
    } else {
      if (spec.idx_train_images.empty() || spec.idx_test_images.empty()) {
        throw DataError("domain " + std::to_string(task_id) + " needs train and test IDX images");
      }
      auto opt = [](const std::string& p) {
        return p.empty() ? std::nullopt : std::optional<std::filesystem::path>(p);
      };
      train = load_idx(spec.idx_train_images, opt(spec.idx_train_labels));
      test = load_idx(spec.idx_test_images, opt(spec.idx_test_labels));
      if (spec.label_filter) {
        train = filter_labels(train, *spec.label_filter, train.meta.name);
        test = filter_labels(test, *spec.label_filter, test.meta.name);
      }
      train = cap(train, geometry.train_size);
      test = cap(test, geometry.test_size);
    }
    const std::uint64_t bin_seed = nn::Rng(seed, "binarize/task" + std::to_string(task_id)).key();
    train = binarize(train, geometry.binarize, bin_seed);
    test = binarize(test, geometry.binarize, bin_seed + 1);
    if (spec.inverse) {
      train = inverse_domain(train);
      test = inverse_domain(test);
    }
    train.meta.name = test.meta.name = spec.name();
    if (!stream.tasks.empty() && train.dim() != stream.tasks.front().train.dim()) {
      throw DataError("domain '" + spec.name() + "' has dimension " + std::to_string(train.dim()) +
                      ", expected " + std::to_string(stream.tasks.front().train.dim()));
    }
    validate(train);
    validate(test);
    stream.tasks.push_back({task_id, std::move(train), std::move(test)});
  }
  return stream;
}

}  // namespace degm::data
