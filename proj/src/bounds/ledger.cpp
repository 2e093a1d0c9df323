#include "degm/bounds/ledger.hpp"

#include <charconv>
#include <ostream>

#include "degm/nn/errors.hpp"

namespace degm::bounds {

void DiagnosticsLedger::append(EvalRecord r) {
  if (!evals_.empty() && r.task_index < evals_.back().task_index) {
    throw ContractError("ledger: evaluation records must not go back in time");
  }
  evals_.push_back(r);
}

void DiagnosticsLedger::append(DiagnosticRecord r) {
  if (!diags_.empty() && r.epoch < diags_.back().epoch) {
    throw ContractError("ledger: diagnostic records must not go back in time");
  }
  diags_.push_back(r);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void DiagnosticsLedger::write_diagnostics_csv(std::ostream& out) const {
  out << kDiagnosticsHeader << '\n';
  for (const auto& r : diags_) {
    const auto& t = r.terms;
    out << r.epoch << ',' << r.task_index << ',' << r.task_epoch << ',' << format_double(t.source_risk) << ','
        << format_double(t.discrepancy) << ',' << format_double(t.slack) << ',' << format_double(t.kl_gap.gap)
        << ',' << format_double(t.target_risk) << ',' << format_double(t.residual) << '\n';
  }
}

double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n < 2) return 0.0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace degm::bounds
