#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace degm::bounds {

class InvalidLogError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IncompleteInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One mixture component and the tasks it models, in learning order.
struct ComponentEntry {
  std::size_t id = 0;
  std::vector<std::size_t> tasks;
  /// Per task: how many times the component was retrained after learning it.
  /// t - a for a component that models several tasks, 0 otherwise.
  std::vector<std::size_t> retrain_counts;
};

struct AssignmentLog {
  std::size_t t = 0;
  std::vector<ComponentEntry> components;
};

/// Builds a log with retrain counts filled in from the task groups.
AssignmentLog make_assignment_log(std::size_t t, const std::vector<std::vector<std::size_t>>& groups);

/// Throws InvalidLogError unless every task 1..t appears in exactly one
/// non-empty component and retrain counts follow the rule above.
void validate(const AssignmentLog& log);

struct AssignmentSummary {
  std::size_t t = 0;
  /// Components trained once (exactly one task) and their task labels.
  std::vector<std::size_t> once;
  std::vector<std::size_t> once_tasks;
  /// Components trained more than once and their task label sets.
  std::vector<std::size_t> multi;
  std::vector<std::vector<std::size_t>> multi_tasks;
  /// |A'| per multi-trained component.
  std::vector<std::size_t> multi_sizes;
  /// c(a) per task a (index a - 1); 0 for once-trained tasks.
  std::vector<std::size_t> retrain;
  /// Number of accumulated shift terms per task (index a - 1): c(a) + 1 for
  /// multi-trained tasks, 0 otherwise.
  std::vector<std::size_t> accumulated_terms;
  std::size_t component_count = 0;
};

AssignmentSummary assignment_summary(const AssignmentLog& log);

enum class TermKind { fit, shift, neg_elbo, kl_gap };

std::string to_string(TermKind k);

/// Key of a measured term.
///  fit      (a, c)  risk of the component against the optimal hypothesis
///                   on task a's distribution after c retrainings
///  shift    (a, k)  shift term between stages k and k + 1 of task a, k >= -1;
///                   stage -1 is the true distribution, stage 0 the first model of it
///  neg_elbo (a, c)  E[-ELBO] of the component on task a's samples at stage c
///  kl_gap   (i, 0)  |KL1 - KL2| of multi-trained component id i
struct TermKey {
  std::size_t task = 0;
  TermKind kind = TermKind::fit;
  long stage = 0;

  auto operator<=>(const TermKey&) const = default;
};

std::string to_string(const TermKey& k);

using TermMap = std::map<TermKey, double>;

struct MixtureBoundReport {
  /// Once-trained terms: fit(a, 0) + shift(a, -1).
  double r_c = 0.0;
  /// Accumulated terms: fit(a, c) + sum_{k=-1}^{c-1} shift(a, k).
  double r_a_prime = 0.0;
  double r_c_shift = 0.0;
  double r_a_prime_shift = 0.0;
  /// Sum of multi-trained component KL gaps.
  double d_diff = 0.0;
  /// (1/t) sum over multi-trained tasks of neg_elbo(a, c).
  double multi_elbo_term = 0.0;
  /// Sum over once-trained tasks of neg_elbo(a, 0), without the 1/t factor.
  double once_elbo_term = 0.0;
  /// multi_elbo_term + once_elbo_term + (r_a_prime_shift + r_c_shift + d_diff) / t.
  double likelihood_bound = 0.0;
  /// (r_c + r_a_prime) / t.
  double risk_bound = 0.0;
  /// Combined-risk terms are not estimable and enter as their lower bound 0.
  bool epsilon_not_estimable = true;
};

/// The keys a report needs for this summary, sorted.
std::vector<TermKey> required_terms(const AssignmentSummary& summary);

/// Throws IncompleteInputError naming every missing key.
MixtureBoundReport mixture_bound_report(const AssignmentSummary& summary, const TermMap& terms);

}  // namespace degm::bounds
