#include "degm/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "degm/data/dataset.hpp"
#include "degm/graph/checkpoint.hpp"
#include "degm/graph/sequence.hpp"
#include "degm/nn/errors.hpp"
#include "degm/replay/diagnose.hpp"
#include "json.hpp"

namespace degm::cli {

namespace fs = std::filesystem;
using bounds::format_double;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.degm";
constexpr const char* kSnapshotDir = "snapshots";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("missing input file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path snapshot_path(const fs::path& dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%06zu.degm", epoch);
  return dir / name;
}

/// Elapsed milliseconds at the end of each task's training, when timing.
class TaskClock {
 public:
  TaskClock(bool on, std::size_t epochs) : on_(on), epochs_(epochs), start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] replay::EpochHook hook() {
    return [this](const replay::EpochMetrics& m) {
      if (on_ && m.task_epoch == epochs_) ends_[m.task_index] = elapsed();
    };
  }
  [[nodiscard]] double elapsed() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }
  [[nodiscard]] const std::map<std::size_t, double>& ends() const { return ends_; }

 private:
  bool on_;
  std::size_t epochs_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::size_t, double> ends_;
};

struct DiagRow {
  std::size_t epoch = 0;
  double source_risk = 0.0, discrepancy = 0.0, kl_gap = 0.0, target_risk = 0.0;
};

std::vector<DiagRow> read_diagnostics(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != bounds::kDiagnosticsHeader) {
    throw data::DataError(path.string() + ": unexpected diagnostics header");
  }
  std::vector<DiagRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw data::DataError(path.string() + ": malformed diagnostics row '" + line + "'");
    try {
      rows.push_back({std::stoul(f[0]), std::stod(f[3]), std::stod(f[4]), std::stod(f[6]), std::stod(f[7])});
    } catch (const std::exception&) {
      throw data::DataError(path.string() + ": malformed diagnostics row '" + line + "'");
    }
  }
  return rows;
}

std::string cell(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace

RunReport cmd_train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const data::TaskStream stream = build_stream(config);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(config) + "\n");

  RunReport report;
  report.run_id = config.run_id();
  report.method = to_string(config.method);
  report.seed = config.seed;
  for (const auto& t : stream.tasks) report.tasks.push_back(t.train.meta.name);
  report.config_json = to_json(config);
  report.artifacts = {{"config", "config.json"},
                      {"metrics", "metrics.csv"},
                      {"report", "report.json"},
                      {"checkpoint", kCheckpointFile}};

  TaskClock clock(options.timing, config.epochs);
  std::vector<bounds::EvalRecord> evals;
  if (is_degm(config.method)) {
    const graph::DegmRun run = graph::train_degm_sequence(stream, config.degm_config(stream.dim()), clock.hook());
    graph::save_graph(dir / kCheckpointFile, run.graph);
    evals = run.ledger.evaluations();
    report.expansion_log = run.graph.expansion_log();
    std::size_t hits = 0, batches = 0;
    for (std::size_t j = 1; j <= stream.size(); ++j) {
      for (std::size_t id : run.selections.at({stream.size(), j})) {
        ++batches;
        if (run.graph.task_of(id) == static_cast<int>(j)) ++hits;
      }
    }
    report.selection_accuracy = static_cast<double>(hits) / static_cast<double>(batches);
  } else {
    const replay::GrRun run = replay::run_gr_sequence(stream, config.gr_options(stream.dim()), clock.hook());
    graph::save_model(dir / kCheckpointFile, run.model, static_cast<int>(stream.size()));
    if (config.diagnostics.enabled) {
      const fs::path snaps = dir / kSnapshotDir;
      fs::remove_all(snaps);
      fs::create_directories(snaps);
      for (const auto& [epoch, model] : run.snapshots) graph::save_model(snapshot_path(snaps, epoch), model);
      report.artifacts["snapshots"] = kSnapshotDir;
    }
    evals = run.ledger.evaluations();
  }
  fill_matrix(report, evals);
  report.wall_clock_ms = clock.elapsed();

  std::ostringstream csv;
  write_metrics_csv(csv, report.run_id, report.seed, report.method, evals, clock.ends());
  write_text(dir / "metrics.csv", csv.str());
  write_text(dir / "report.json", report_json(report));
  return report;
}

std::vector<RunReport> cmd_train_seeds(const RunConfig& config, const std::vector<std::uint64_t>& seeds,
                                       const TrainOptions& options) {
  if (seeds.empty()) throw ConfigError("field 'seeds': expected at least one seed");
  std::vector<RunReport> reports;
  for (std::uint64_t s : seeds) {
    RunConfig c = config;
    c.seed = s;
    c.output_dir = config.output_dir / ("seed_" + std::to_string(s));
    reports.push_back(cmd_train(c, options));
  }
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "aggregate.json", aggregate_json(reports));
  return reports;
}

std::string EvalReport::to_json() const {
  json tasks_json = json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"task", t.task}, {"nll", t.nll}, {"nll_std_error", t.nll_std_error}, {"elbo", t.elbo}});
  }
  double avg = 0.0;
  for (const auto& t : tasks) avg += t.nll;
  if (!tasks.empty()) avg /= static_cast<double>(tasks.size());
  const json j = {{"schema_version", kReportSchemaVersion},
                  {"checkpoint_kind", graph ? "graph" : "single_model"},
                  {"k_prime", k_prime},
                  {"tasks", tasks_json},
                  {"average_nll", avg},
                  {"selection_accuracy", selection_accuracy ? json(*selection_accuracy) : json(nullptr)}};
  return j.dump(2) + "\n";
}

EvalReport cmd_eval(const fs::path& checkpoint, const RunConfig& config, std::size_t k_prime, std::size_t batch) {
  if (k_prime == 0) throw ConfigError("field 'k_prime': expected a positive integer");
  if (batch == 0) throw ConfigError("field 'batch': expected a positive integer");
  graph::CheckpointKind kind{};
  const graph::GraphState g = graph::load_graph(checkpoint, &kind);
  const data::TaskStream stream = build_stream(config);
  if (stream.dim() != g.arch().data_dim) {
    throw data::DataError(checkpoint.string() + ": model expects data width " + std::to_string(g.arch().data_dim) +
                          ", the stream has width " + std::to_string(stream.dim()));
  }
  EvalReport report;
  report.graph = kind == graph::CheckpointKind::graph;
  report.k_prime = k_prime;
  const nn::Rng base = replay::RunStreams{config.seed}.root().child("cli/eval");
  std::size_t hits = 0, batches = 0;
  for (std::size_t j = 1; j <= stream.size(); ++j) {
    const nn::Tensor& test = stream.tasks[j - 1].test.images;
    const nn::Rng rng = base.child("task", j);
    bounds::EvalRecord r;
    if (report.graph) {
      const graph::GraphEval e = graph::evaluate_graph(g, test, k_prime, batch, rng);
      r = e.record;
      for (std::size_t id : e.selected) {
        ++batches;
        if (g.task_of(id) == static_cast<int>(j)) ++hits;
      }
    } else {
      r = replay::evaluate_model(g.basic(0).model, test, k_prime, rng);
    }
    report.tasks.push_back({j, r.nll, r.nll_std_error, r.elbo});
  }
  if (report.graph) report.selection_accuracy = static_cast<double>(hits) / static_cast<double>(batches);
  return report;
}

bounds::DiagnosticsLedger cmd_diagnose(const fs::path& run_dir) {
  const fs::path config_path = run_dir / "config.json";
  if (!fs::exists(config_path)) throw data::DataError("missing input file " + config_path.string());
  const RunConfig config = load_config(config_path);
  if (is_degm(config.method)) {
    throw ConfigError(config_path.string() + ": field 'method': diagnostics need a replay run");
  }
  const fs::path snaps = run_dir / kSnapshotDir;
  std::map<std::size_t, vae::VaeModel> snapshots;
  if (fs::is_directory(snaps)) {
    for (const auto& entry : fs::directory_iterator(snaps)) {
      const std::string name = entry.path().filename().string();
      std::size_t epoch = 0;
      if (std::sscanf(name.c_str(), "epoch_%zu.degm", &epoch) == 1) snapshots.emplace(epoch, graph::load_model(entry.path()));
    }
  }
  if (snapshots.empty()) {
    throw data::DataError(snaps.string() + ": no snapshots; train with diagnostics.enabled (or --diagnostics)");
  }
  const data::TaskStream stream = build_stream(config);
  const replay::GrRunOptions options = config.gr_options(stream.dim());
  std::vector<bounds::DiagnosticRecord> records;
  try {
    records = replay::diagnose_gr_run(stream, options, snapshots, config.diagnose_options());
  } catch (const std::invalid_argument& e) {
    throw data::DataError(snaps.string() + ": " + e.what());
  }
  bounds::DiagnosticsLedger ledger;
  for (const auto& r : records) ledger.append(r);
  std::ostringstream csv;
  ledger.write_diagnostics_csv(csv);
  write_text(run_dir / "diagnostics.csv", csv.str());

  const auto& [last_epoch, last_model] = *snapshots.rbegin();
  const nn::Rng base = replay::RunStreams{config.seed}.root().child("cli/diagnose");
  double iw = 0.0;
  for (std::size_t j = 1; j <= stream.size(); ++j) {
    iw += vae::nll_estimate(last_model, stream.tasks[j - 1].test.images, config.diagnostics.eval_k_prime,
                            base.child("task", j))
              .mean;
  }
  json terms = json::array();
  for (const auto& r : records) {
    if (r.task_epoch != config.epochs) continue;
    terms.push_back({{"epoch", r.epoch},
                     {"task_index", r.task_index},
                     {"source_risk", r.terms.source_risk},
                     {"discrepancy", r.terms.discrepancy},
                     {"kl_gap", r.terms.kl_gap.gap},
                     {"target_risk", r.terms.target_risk}});
  }
  const json summary = {{"schema_version", kReportSchemaVersion},
                        {"run_id", config.run_id()},
                        {"epochs", records.size()},
                        {"task_ends", terms},
                        {"final_epoch", last_epoch},
                        {"eval_k_prime", config.diagnostics.eval_k_prime},
                        {"final_average_nll", iw / static_cast<double>(stream.size())}};
  write_text(run_dir / "diagnose_summary.json", summary.dump(2) + "\n");
  return ledger;
}

std::vector<fs::path> cmd_export_plots(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw data::DataError("export-plots: no run directories given");
  std::vector<RunReport> reports;
  std::vector<std::optional<std::vector<DiagRow>>> diags;
  for (const auto& d : run_dirs) {
    reports.push_back(parse_report(read_text(d / "report.json"), (d / "report.json").string()));
    const fs::path csv = d / "diagnostics.csv";
    diags.push_back(fs::exists(csv) ? std::optional(read_diagnostics(csv)) : std::nullopt);
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::size_t tasks = 0;
  for (const auto& r : reports) tasks = std::max(tasks, r.nll.empty() ? 0 : r.nll.back().size());
  std::ostringstream nll;
  nll << "# task";
  for (const auto& r : reports) nll << ' ' << r.run_id;
  nll << '\n';
  for (std::size_t j = 0; j < tasks; ++j) {
    nll << j + 1;
    for (const auto& r : reports) {
      nll << ' ' << cell(!r.nll.empty() && j < r.nll.back().size() ? r.nll.back()[j] : std::nan(""));
    }
    nll << '\n';
  }
  write_text(out_dir / "nll_per_task.dat", nll.str());
  written.push_back(out_dir / "nll_per_task.dat");

  std::set<std::size_t> epochs;
  for (const auto& d : diags) {
    if (d) {
      for (const auto& row : *d) epochs.insert(row.epoch);
    }
  }
  if (!epochs.empty()) {
    std::ostringstream a;
    a << "# epoch";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (diags[i]) a << ' ' << reports[i].run_id;
    }
    a << '\n';
    for (std::size_t e : epochs) {
      a << e;
      for (const auto& d : diags) {
        if (!d) continue;
        const auto it = std::find_if(d->begin(), d->end(), [&](const DiagRow& r) { return r.epoch == e; });
        a << ' ' << cell(it == d->end() ? std::nan("") : it->target_risk);
      }
      a << '\n';
    }
    write_text(out_dir / "fig3a.dat", a.str());
    written.push_back(out_dir / "fig3a.dat");

    const auto& first = *std::find_if(diags.begin(), diags.end(), [](const auto& d) { return d.has_value(); });
    std::ostringstream b;
    b << "# epoch source_risk discrepancy kl_gap target_risk\n";
    for (const auto& r : *first) {
      b << r.epoch << ' ' << cell(r.source_risk) << ' ' << cell(r.discrepancy) << ' ' << cell(r.kl_gap) << ' '
        << cell(r.target_risk) << '\n';
    }
    write_text(out_dir / "fig3b.dat", b.str());
    written.push_back(out_dir / "fig3b.dat");
  }
  return written;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual-learning VAEs: generative replay and dynamic expansion graphs", "degm"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one run (or one per seed) from a JSON config");
  std::string config_path;
  ConfigOverrides ov;
  std::vector<std::uint64_t> seeds;
  bool timing = false, diagnostics = false;
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--method", ov.method, "elbo_gr, iwelbo_gr, degm_elbo, degm_iwelbo or degm2");
  train->add_option("--seed", ov.seed, "Run seed");
  train->add_option("--seeds", seeds, "Comma-separated seeds; writes aggregate.json")->delimiter(',');
  train->add_option("--k-prime", ov.k_prime, "Importance samples for IWELBO objectives");
  train->add_option("--tau", ov.tau, "Expansion threshold for DEGM");
  train->add_option("--epochs", ov.epochs, "Epochs per task");
  train->add_option("--batch-size", ov.batch_size, "Minibatch size");
  train->add_option("--learning-rate", ov.learning_rate, "Adam step size");
  train->add_option("--replay-ratio", ov.replay_ratio, "Pseudo samples per seen training example");
  train->add_option("--output-dir", ov.output_dir, "Run directory");
  train->add_flag("--diagnostics", diagnostics, "Keep per-epoch snapshots for diagnose");
  train->add_flag("--timing", timing, "Record wall-clock times in metrics.csv and report.json");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a config's stream");
  std::string checkpoint, eval_config, eval_output;
  std::size_t eval_k = 200, eval_batch = 100;
  eval->add_option("--checkpoint", checkpoint, "checkpoint.degm")->required();
  eval->add_option("--config", eval_config, "JSON config naming the stream")->required();
  eval->add_option("--k-prime", eval_k, "Importance samples per example");
  eval->add_option("--batch", eval_batch, "Test batch size for node selection");
  eval->add_option("--output", eval_output, "Write the JSON result here instead of stdout");

  auto* diagnose = app.add_subcommand("diagnose", "Bound terms per recorded epoch of a replay run");
  std::string run_dir;
  diagnose->add_option("--run-dir", run_dir, "Run directory trained with diagnostics")->required();

  auto* plots = app.add_subcommand("export-plots", "Plot-data files from run directories");
  std::vector<std::string> plot_runs;
  std::string plot_out;
  plots->add_option("--out", plot_out, "Output directory")->required();
  plots->add_option("runs", plot_runs, "Run directories")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (train->parsed()) {
      if (diagnostics) ov.diagnostics = true;
      const RunConfig config = load_config(config_path, ov);
      const TrainOptions opts{timing};
      if (!seeds.empty()) {
        const auto reports = cmd_train_seeds(config, seeds, opts);
        for (const auto& r : reports) out << r.run_id << " final average NLL " << format_double(r.final_average()) << '\n';
        out << "aggregate: " << (config.output_dir / "aggregate.json").string() << '\n';
      } else {
        const RunReport r = cmd_train(config, opts);
        out << r.run_id << " final average NLL " << format_double(r.final_average()) << '\n';
      }
    } else if (eval->parsed()) {
      const RunConfig config = load_config(eval_config);
      const EvalReport r = cmd_eval(checkpoint, config, eval_k, eval_batch);
      if (eval_output.empty()) {
        out << r.to_json();
      } else {
        write_text(eval_output, r.to_json());
      }
    } else if (diagnose->parsed()) {
      const auto ledger = cmd_diagnose(run_dir);
      out << ledger.diagnostics().size() << " epochs written to " << (fs::path(run_dir) / "diagnostics.csv").string()
          << '\n';
    } else if (plots->parsed()) {
      std::vector<fs::path> dirs(plot_runs.begin(), plot_runs.end());
      for (const auto& p : cmd_export_plots(dirs, plot_out)) out << p.string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const graph::CheckpointError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace degm::cli
