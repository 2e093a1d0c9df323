#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "degm/bounds/ledger.hpp"
#include "degm/graph/graph.hpp"

namespace degm::cli {

inline constexpr int kReportSchemaVersion = 1;

inline constexpr const char* kMetricsHeader =
    "run_id,seed,method,task_index,eval_task,nll,elbo,kl_term,recon_term,k_prime,epoch,wall_ms";

struct RunReport {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::string> tasks;
  /// Row i (after task i + 1) holds tasks 1..i + 1: lower-triangular.
  std::vector<std::vector<double>> nll;
  std::vector<std::vector<double>> nll_std_error;
  std::vector<graph::ExpansionRecord> expansion_log;
  /// Share of final-row test batches routed to the node of their own task.
  std::optional<double> selection_accuracy;
  double wall_clock_ms = 0.0;
  /// Text of the resolved config.
  std::string config_json;
  std::map<std::string, std::string> artifacts;

  /// Mean of row i.
  [[nodiscard]] double row_average(std::size_t i) const;
  [[nodiscard]] double final_average() const { return row_average(nll.size() - 1); }
};

/// One metrics row per evaluation; wall_ms per task index (0 when absent).
void write_metrics_csv(std::ostream& out, const std::string& run_id, std::uint64_t seed, const std::string& method,
                       const std::vector<bounds::EvalRecord>& evals, const std::map<std::size_t, double>& wall_ms);

/// Fills the NLL matrix from ledger evaluations. Throws ContractError when an
/// evaluation lies above the diagonal or a cell is missing.
void fill_matrix(RunReport& report, const std::vector<bounds::EvalRecord>& evals);

std::string report_json(const RunReport& report);
/// Throws data::DataError naming the source when the text is not a report.
RunReport parse_report(const std::string& text, const std::string& source);

/// Mean and standard error over seeds of the final average and of each task's final NLL.
std::string aggregate_json(const std::vector<RunReport>& reports);

}  // namespace degm::cli
