#include "degm/cli/report.hpp"

#include <cmath>

#include "degm/data/dataset.hpp"
#include "degm/nn/errors.hpp"
#include "json.hpp"

namespace degm::cli {

using nlohmann::json;
using bounds::format_double;

namespace {

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

}  // namespace

double RunReport::row_average(std::size_t i) const {
  if (i >= nll.size() || nll[i].empty()) throw ContractError("report: no NLL row " + std::to_string(i + 1));
  double s = 0.0;
  for (double v : nll[i]) s += v;
  return s / static_cast<double>(nll[i].size());
}

void write_metrics_csv(std::ostream& out, const std::string& run_id, std::uint64_t seed, const std::string& method,
                       const std::vector<bounds::EvalRecord>& evals, const std::map<std::size_t, double>& wall_ms) {
  out << kMetricsHeader << '\n';
  for (const auto& r : evals) {
    const auto w = wall_ms.find(r.task_index);
    out << run_id << ',' << seed << ',' << method << ',' << r.task_index << ',' << r.eval_task << ','
        << format_double(r.nll) << ',' << format_double(r.elbo) << ',' << format_double(r.kl_term) << ','
        << format_double(r.recon_term) << ',' << r.k_prime << ',' << r.epoch << ','
        << format_double(w == wall_ms.end() ? 0.0 : w->second) << '\n';
  }
}

void fill_matrix(RunReport& report, const std::vector<bounds::EvalRecord>& evals) {
  std::size_t rows = 0;
  for (const auto& r : evals) rows = std::max(rows, r.task_index);
  report.nll.assign(rows, {});
  report.nll_std_error.assign(rows, {});
  for (std::size_t i = 0; i < rows; ++i) {
    report.nll[i].assign(i + 1, std::nan(""));
    report.nll_std_error[i].assign(i + 1, std::nan(""));
  }
  for (const auto& r : evals) {
    if (r.eval_task == 0 || r.eval_task > r.task_index) {
      throw ContractError("report: task " + std::to_string(r.eval_task) + " evaluated after task " +
                          std::to_string(r.task_index));
    }
    report.nll[r.task_index - 1][r.eval_task - 1] = r.nll;
    report.nll_std_error[r.task_index - 1][r.eval_task - 1] = r.nll_std_error;
  }
  for (const auto& row : report.nll) {
    for (double v : row) {
      if (std::isnan(v)) throw ContractError("report: NLL matrix has a missing cell");
    }
  }
}

std::string report_json(const RunReport& r) {
  json log = json::array();
  for (const auto& e : r.expansion_log) {
    log.push_back({{"task_id", e.task_id}, {"decision", graph::to_string(e.decision)}, {"ks", e.ks}, {"tau", e.tau}});
  }
  json averages = json::array();
  for (std::size_t i = 0; i < r.nll.size(); ++i) averages.push_back(r.row_average(i));
  json j = {{"schema_version", kReportSchemaVersion},
            {"run_id", r.run_id},
            {"method", r.method},
            {"seed", r.seed},
            {"tasks", r.tasks},
            {"nll_matrix", r.nll},
            {"nll_std_error", r.nll_std_error},
            {"average_nll", averages},
            {"final_average_nll", r.nll.empty() ? json(nullptr) : json(r.final_average())},
            {"expansion_log", log},
            {"selection_accuracy", r.selection_accuracy ? json(*r.selection_accuracy) : json(nullptr)},
            {"wall_clock_ms", r.wall_clock_ms},
            {"config", json::parse(r.config_json.empty() ? "{}" : r.config_json)},
            {"artifacts", r.artifacts}};
  return j.dump(2) + "\n";
}

RunReport parse_report(const std::string& text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw data::DataError(source + ": unsupported report schema_version");
    }
    RunReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.tasks = j.at("tasks").get<std::vector<std::string>>();
    r.nll = j.at("nll_matrix").get<std::vector<std::vector<double>>>();
    r.nll_std_error = j.at("nll_std_error").get<std::vector<std::vector<double>>>();
    for (const auto& e : j.at("expansion_log")) {
      r.expansion_log.push_back({e.at("task_id").get<int>(),
                                 e.at("decision").get<std::string>() == "basic" ? graph::Decision::basic
                                                                                : graph::Decision::specific,
                                 e.at("ks").get<std::vector<double>>(), e.at("tau").get<double>()});
    }
    if (!j.at("selection_accuracy").is_null()) r.selection_accuracy = j.at("selection_accuracy").get<double>();
    r.wall_clock_ms = j.at("wall_clock_ms").get<double>();
    r.config_json = j.at("config").dump(2);
    r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw data::DataError(source + ": not a run report (" + e.what() + ")");
  }
}

std::string aggregate_json(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw ContractError("aggregate: no reports");
  std::vector<double> finals;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) {
    finals.push_back(r.final_average());
    seeds.push_back(r.seed);
  }
  const MeanSe f = mean_se(finals);
  json tasks = json::array();
  const std::size_t t = reports.front().nll.back().size();
  for (std::size_t j = 0; j < t; ++j) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.nll.back().at(j));
    const MeanSe m = mean_se(v);
    tasks.push_back({{"task", j + 1}, {"mean", m.mean}, {"std_error", m.std_error}, {"per_seed", v}});
  }
  const json j = {{"schema_version", kReportSchemaVersion},
                  {"method", reports.front().method},
                  {"seeds", seeds},
                  {"final_average_nll", {{"mean", f.mean}, {"std_error", f.std_error}, {"per_seed", finals}}},
                  {"final_task_nll", tasks}};
  return j.dump(2) + "\n";
}

}  // namespace degm::cli
