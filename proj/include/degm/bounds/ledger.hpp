#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "degm/bounds/kl_gap.hpp"

namespace degm::bounds {

/// Held-out evaluation of one seen task after training on task_index.
struct EvalRecord {
  std::size_t task_index = 0;
  std::size_t eval_task = 0;
  double nll = 0.0;
  double nll_std_error = 0.0;
  double elbo = 0.0;
  double recon_term = 0.0;
  double kl_term = 0.0;
  std::size_t k_prime = 0;
  /// Global epoch count at evaluation time.
  std::size_t epoch = 0;
};

/// Bound terms measured at the end of one training epoch.
struct DiagnosticRecord {
  /// Global epoch, 1-based across tasks.
  std::size_t epoch = 0;
  std::size_t task_index = 0;
  std::size_t task_epoch = 0;
  LelboBreakdown terms;
};

/// Append-only; time indices never decrease.
class DiagnosticsLedger {
 public:
  /// Throws ContractError if task_index or epoch decreases.
  void append(EvalRecord r);
  void append(DiagnosticRecord r);

  [[nodiscard]] const std::vector<EvalRecord>& evaluations() const { return evals_; }
  [[nodiscard]] const std::vector<DiagnosticRecord>& diagnostics() const { return diags_; }

  /// Header: epoch,task_index,task_epoch,source_risk,discrepancy,slack,kl_gap,target_risk,residual
  void write_diagnostics_csv(std::ostream& out) const;

 private:
  std::vector<EvalRecord> evals_;
  std::vector<DiagnosticRecord> diags_;
};

inline constexpr const char* kDiagnosticsHeader =
    "epoch,task_index,task_epoch,source_risk,discrepancy,slack,kl_gap,target_risk,residual";

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Least-squares slope of ys against xs; 0 for fewer than two points.
double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace degm::bounds
