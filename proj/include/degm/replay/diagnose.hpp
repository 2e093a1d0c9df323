#pragma once

#include <map>
#include <vector>

#include "degm/bounds/ledger.hpp"
#include "degm/data/stream.hpp"
#include "degm/replay/trainer.hpp"

namespace degm::replay {

struct DiagnoseOptions {
  /// Most recent snapshots kept in the hypothesis pool.
  std::size_t pool_size = 5;
  double delta = 0.05;
  std::size_t rademacher_draws = 0;
};

/// Bound terms at every snapshot epoch >= 1 of a replay run: the model after
/// that epoch, the test sets of every task seen so far, the mixed training set
/// of the current task (rebuilt from the task-end snapshots), and a pool of
/// the last pool_size snapshots up to that epoch (the initialization included).
/// Needs a snapshot at every task end; throws std::invalid_argument otherwise.
std::vector<bounds::DiagnosticRecord> diagnose_gr_run(const data::TaskStream& stream, const GrRunOptions& run,
                                                      const std::map<std::size_t, vae::VaeModel>& snapshots,
                                                      const DiagnoseOptions& options);

}  // namespace degm::replay
