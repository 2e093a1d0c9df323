#include "degm/bounds/assignment.hpp"

#include <algorithm>

namespace degm::bounds {

AssignmentLog make_assignment_log(std::size_t t, const std::vector<std::vector<std::size_t>>& groups) {
  AssignmentLog log;
  log.t = t;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    ComponentEntry e;
    e.id = i;
    e.tasks = groups[i];
    for (std::size_t a : e.tasks) e.retrain_counts.push_back(e.tasks.size() > 1 && a <= t ? t - a : 0);
    log.components.push_back(std::move(e));
  }
  return log;
}

void validate(const AssignmentLog& log) {
  if (log.t == 0) throw InvalidLogError("assignment log: no tasks");
  std::vector<int> seen(log.t, 0);
  for (const auto& c : log.components) {
    if (c.tasks.empty()) throw InvalidLogError("assignment log: component " + std::to_string(c.id) + " has no tasks");
    if (c.retrain_counts.size() != c.tasks.size()) {
      throw InvalidLogError("assignment log: component " + std::to_string(c.id) + " retrain counts do not match its tasks");
    }
    for (std::size_t j = 0; j < c.tasks.size(); ++j) {
      const std::size_t a = c.tasks[j];
      if (a == 0 || a > log.t) throw InvalidLogError("assignment log: task " + std::to_string(a) + " outside 1.." + std::to_string(log.t));
      if (++seen[a - 1] > 1) throw InvalidLogError("assignment log: task " + std::to_string(a) + " covered twice");
      const std::size_t expected = c.tasks.size() > 1 ? log.t - a : 0;
      if (c.retrain_counts[j] != expected) {
        throw InvalidLogError("assignment log: task " + std::to_string(a) + " retrain count " +
                              std::to_string(c.retrain_counts[j]) + ", expected " + std::to_string(expected));
      }
    }
  }
  for (std::size_t a = 1; a <= log.t; ++a) {
    if (seen[a - 1] == 0) throw InvalidLogError("assignment log: task " + std::to_string(a) + " missing");
  }
}

AssignmentSummary assignment_summary(const AssignmentLog& log) {
  validate(log);
  AssignmentSummary s;
  s.t = log.t;
  s.retrain.assign(log.t, 0);
  s.accumulated_terms.assign(log.t, 0);
  s.component_count = log.components.size();
  for (const auto& c : log.components) {
    if (c.tasks.size() == 1) {
      s.once.push_back(c.id);
      s.once_tasks.push_back(c.tasks.front());
      continue;
    }
    s.multi.push_back(c.id);
    s.multi_tasks.push_back(c.tasks);
    s.multi_sizes.push_back(c.tasks.size());
    for (std::size_t j = 0; j < c.tasks.size(); ++j) {
      s.retrain[c.tasks[j] - 1] = c.retrain_counts[j];
      s.accumulated_terms[c.tasks[j] - 1] = c.retrain_counts[j] + 1;
    }
  }
  return s;
}

std::string to_string(TermKind k) {
  switch (k) {
    case TermKind::fit:
      return "fit";
    case TermKind::shift:
      return "shift";
    case TermKind::neg_elbo:
      return "neg_elbo";
    case TermKind::kl_gap:
      return "kl_gap";
  }
  return "unknown";
}

std::string to_string(const TermKey& k) {
  return "(" + std::to_string(k.task) + ", " + to_string(k.kind) + ", " + std::to_string(k.stage) + ")";
}

namespace {

struct Collector {
  const TermMap& terms;
  std::vector<TermKey> missing;

  double operator()(std::size_t task, TermKind kind, long stage) {
    const TermKey key{task, kind, stage};
    const auto it = terms.find(key);
    if (it == terms.end()) {
      missing.push_back(key);
      return 0.0;
    }
    return it->second;
  }
};

MixtureBoundReport assemble(const AssignmentSummary& s, Collector& get) {
  MixtureBoundReport r;
  for (std::size_t a : s.once_tasks) {
    const double shift = get(a, TermKind::shift, -1);
    r.r_c += get(a, TermKind::fit, 0) + shift;
    r.r_c_shift += shift;
    r.once_elbo_term += get(a, TermKind::neg_elbo, 0);
  }
  for (std::size_t i = 0; i < s.multi.size(); ++i) {
    for (std::size_t a : s.multi_tasks[i]) {
      const long c = static_cast<long>(s.retrain[a - 1]);
      double shifts = 0.0;
      for (long k = -1; k <= c - 1; ++k) shifts += get(a, TermKind::shift, k);
      r.r_a_prime += get(a, TermKind::fit, c) + shifts;
      r.r_a_prime_shift += shifts;
      r.multi_elbo_term += get(a, TermKind::neg_elbo, c);
    }
    r.d_diff += get(s.multi[i], TermKind::kl_gap, 0);
  }
  const double t = static_cast<double>(s.t);
  r.multi_elbo_term /= t;
  r.likelihood_bound = r.multi_elbo_term + r.once_elbo_term + (r.r_a_prime_shift + r.r_c_shift + r.d_diff) / t;
  r.risk_bound = (r.r_c + r.r_a_prime) / t;
  return r;
}

}  // namespace

std::vector<TermKey> required_terms(const AssignmentSummary& summary) {
  const TermMap empty;
  Collector get{empty, {}};
  assemble(summary, get);
  std::sort(get.missing.begin(), get.missing.end());
  get.missing.erase(std::unique(get.missing.begin(), get.missing.end()), get.missing.end());
  return get.missing;
}

MixtureBoundReport mixture_bound_report(const AssignmentSummary& summary, const TermMap& terms) {
  Collector get{terms, {}};
  const MixtureBoundReport r = assemble(summary, get);
  if (!get.missing.empty()) {
    std::sort(get.missing.begin(), get.missing.end());
    std::string msg = "mixture_bound_report: missing terms";
    for (const auto& k : get.missing) msg += " " + to_string(k);
    throw IncompleteInputError(msg);
  }
  return r;
}

}  // namespace degm::bounds
