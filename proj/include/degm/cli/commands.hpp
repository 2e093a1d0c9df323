#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "degm/cli/config.hpp"
#include "degm/cli/report.hpp"

namespace degm::cli {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

struct TrainOptions {
  /// Record wall-clock times; otherwise wall_ms columns are 0 and runs are byte-reproducible.
  bool timing = false;
};

/// Trains one seed into config.output_dir: config.json, metrics.csv,
/// report.json, checkpoint.degm and, with diagnostics enabled, snapshots/.
RunReport cmd_train(const RunConfig& config, const TrainOptions& options = {});

/// One run per seed in output_dir/seed_<s>/ plus output_dir/aggregate.json.
std::vector<RunReport> cmd_train_seeds(const RunConfig& config, const std::vector<std::uint64_t>& seeds,
                                       const TrainOptions& options = {});

struct TaskEval {
  std::size_t task = 0;
  double nll = 0.0;
  double nll_std_error = 0.0;
  double elbo = 0.0;
};

struct EvalReport {
  bool graph = false;
  std::size_t k_prime = 0;
  std::vector<TaskEval> tasks;
  /// Graph checkpoints only: share of test batches routed to a node of the batch's own task.
  std::optional<double> selection_accuracy;

  [[nodiscard]] std::string to_json() const;
};

/// Graph checkpoints: node selection per test batch, then NLL with the chosen
/// node. Single models: NLL on each whole test set. Throws data::DataError when
/// the checkpoint and the stream disagree on the data width.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const RunConfig& config, std::size_t k_prime,
                    std::size_t batch = 100);

/// Reads config.json and snapshots/ of a replay run directory and writes
/// diagnostics.csv and diagnose_summary.json there. Missing artifacts raise
/// data::DataError naming the file.
bounds::DiagnosticsLedger cmd_diagnose(const std::filesystem::path& run_dir);

/// Writes fig3a.dat (target risk per run), fig3b.dat (terms of the first run
/// with diagnostics) and nll_per_task.dat (final NLL per run) into out_dir.
/// Returns the files written.
std::vector<std::filesystem::path> cmd_export_plots(const std::vector<std::filesystem::path>& run_dirs,
                                                    const std::filesystem::path& out_dir);

/// Command-line entry: train, eval, diagnose, export-plots. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace degm::cli
