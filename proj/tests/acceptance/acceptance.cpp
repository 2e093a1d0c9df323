// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "degm/bounds/assignment.hpp"
#include "degm/bounds/ledger.hpp"
#include "degm/cli/commands.hpp"
#include "degm/data/idx.hpp"
#include "degm/data/stream.hpp"
#include "degm/graph/checkpoint.hpp"
#include "degm/graph/graph.hpp"
#include "degm/graph/sequence.hpp"
#include "degm/graph/specific.hpp"
#include "degm/nn/mlp.hpp"
#include "degm/replay/diagnose.hpp"
#include "degm/replay/trainer.hpp"
#include "degm/vae/objectives.hpp"
#include "gradcheck.hpp"

using namespace degm;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

data::TaskStream stream_of(const std::vector<std::string>& names, std::uint64_t seed, data::StreamGeometry geo = {}) {
  std::vector<data::DomainSpec> specs;
  for (const auto& n : names) specs.push_back(data::DomainSpec::parse(n));
  return data::make_cross_domain_stream(specs, geo, seed);
}

// 1. Random small networks against central finite differences.
Outcome autodiff() {
  const auto t0 = Clock::now();
  nn::Rng rng(2024, "acceptance/gradcheck");
  const nn::Activation acts[] = {nn::Activation::tanh, nn::Activation::sigmoid, nn::Activation::identity,
                                 nn::Activation::relu};
  double worst = 0.0;
  std::size_t failed = 0, checked = 0, kinks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t depth = 1 + rng.below(3);
    nn::MlpSpec spec;
    spec.seed = 100 + static_cast<std::uint64_t>(trial);
    spec.layer_widths.push_back(1 + rng.below(5));
    for (std::size_t l = 0; l < depth; ++l) {
      spec.layer_widths.push_back(1 + rng.below(5));
      spec.activations.push_back(acts[rng.below(4)]);
    }
    const nn::Mlp net = nn::build_mlp(spec);
    const std::size_t batch = 1 + rng.below(4);
    std::vector<double> xs(batch * spec.layer_widths.front());
    for (auto& v : xs) v = rng.uniform();
    const Tensor x = Tensor::matrix(batch, spec.layer_widths.front(), xs);
    const auto r = testing::grad_check([&] { return nn::mean(nn::square(nn::add_scalar(net.forward(x), -0.3))); },
                                       net.parameters());
    worst = std::max(worst, r.max_relative_error);
    failed += !r.ok || r.max_relative_error >= 1e-4;
    checked += r.checked;
    kinks += r.kinks;
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 30.0,
          fmt("100 checks, %zu failed, max rel err %.2e over %zu entries (%zu relu kinks skipped), %.1f s", failed,
              worst, checked, kinks, secs)};
}

// 2. Closed-form Gaussian KL against Monte-Carlo log q - log p.
Outcome kl_monte_carlo() {
  nn::Rng rng(17, "acceptance/kl");
  std::size_t ok = 0;
  double worst_z = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t dim = 1 + rng.below(4);
    std::vector<double> mu(dim), lv(dim);
    for (auto& v : mu) v = rng.uniform(-2, 2);
    for (auto& v : lv) v = rng.uniform(-2, 1.5);
    const double analytic = vae::gaussian_kl(Tensor::matrix(1, dim, mu), Tensor::matrix(1, dim, lv));
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double eps = rng.normal();
        const double z = mu[j] + std::exp(0.5 * lv[j]) * eps;
        v += -0.5 * eps * eps - 0.5 * lv[j] + 0.5 * z * z;
      }
      s += v;
      ss += v * v;
    }
    const double m = s / n;
    const double se = std::sqrt((ss / n - m * m) / (n - 1));
    const double z = std::abs(m - analytic) / se;
    worst_z = std::max(worst_z, z);
    ok += z <= 3.0;
  }
  return {ok == 50, fmt("%zu/50 within 3 s.e., worst |z| %.2f", ok, worst_z)};
}

// 3. ELBO <= IWELBO-5 <= IWELBO-50 on one trained model, paired over 200 repeats.
Outcome iwelbo_ordering() {
  const auto train = stream_of({"bars", "rings"}, 1).tasks[0];
  vae::VaeModel m = vae::build_vae(vae::VaeArch{}, 5);
  replay::train_vae(m, train.train.images, replay::TrainConfig{}, nn::Rng(1, "acceptance/iw/train"));
  const Tensor& x = train.test.images;
  const nn::Rng base(7, "acceptance/iw");
  nn::NoGradGuard guard;
  std::vector<double> d1, d2;
  double e_sum = 0.0, i5_sum = 0.0, i50_sum = 0.0;
  const std::size_t reps = 200;
  for (std::size_t r = 0; r < reps; ++r) {
    nn::Rng ge = base.child("elbo", r), g5 = base.child("iw5", r), g50 = base.child("iw50", r);
    const double e = vae::elbo(m, x, 1, ge).total;
    const double i5 = vae::iwelbo(m, x, 5, g5).total;
    const double i50 = vae::iwelbo(m, x, 50, g50).total;
    d1.push_back(i5 - e);
    d2.push_back(i50 - i5);
    e_sum += e;
    i5_sum += i5;
    i50_sum += i50;
  }
  // One-sided t critical value, 199 degrees of freedom, alpha 0.01.
  const double t_crit = 2.345;
  const MeanSe a = mean_se(d1), b = mean_se(d2);
  const double ta = a.mean / a.se, tb = b.mean / b.se;

  nn::Rng shared(3, "acceptance/iw/shared");
  const Tensor noise = vae::draw_noise(shared, x.rows(), m.arch().latent_dim);
  const auto e1 = vae::elbo(m, x, 1, noise);
  const auto i1 = vae::iwelbo(m, x, 1, noise);
  const bool exact = e1.total == i1.total && e1.per_example == i1.per_example;
  return {ta > t_crit && tb > t_crit && exact,
          fmt("means %.3f <= %.3f <= %.3f, t = %.1f and %.1f (critical %.3f), K'=1 equals ELBO exactly: %s",
              e_sum / reps, i5_sum / reps, i50_sum / reps, ta, tb, t_crit, exact ? "yes" : "no")};
}

// 4. Importance weights over random novelty vectors.
Outcome pi_weights() {
  nn::Rng rng(11, "acceptance/pi");
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(8);
    std::vector<double> ks(k);
    for (auto& v : ks) v = rng.uniform(0.0, 1000.0);
    const auto pi = graph::importance_weights(ks);
    double sum = 0.0;
    bool ok = pi.size() == k;
    for (double p : pi) {
      ok = ok && p >= 0.0;
      sum += p;
    }
    ok = ok && std::abs(sum - 1.0) <= 1e-9;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        if (ks[a] < ks[b]) ok = ok && pi[a] > pi[b];
    bad += !ok;
  }
  bool degenerate = graph::importance_weights({42.0}) == std::vector<double>{1.0};
  for (std::size_t k = 2; k <= 8; ++k) {
    for (double p : graph::importance_weights(std::vector<double>(k, 3.5)))
      degenerate = degenerate && std::abs(p - 1.0 / static_cast<double>(k)) <= 1e-15;
  }
  return {bad == 0 && degenerate,
          fmt("%zu/1000 vectors violate simplex or monotonicity; K=1 and equal-ks rules %s", bad,
              degenerate ? "hold" : "fail")};
}

// 5. MELBO below the K'=1000 log-likelihood estimate on 20 trained Specific nodes.
Outcome melbo_validity() {
  std::size_t ok = 0, total = 0, hash_ok = 0;
  double worst = -1e300;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data::StreamGeometry geo;
    geo.train_size = 1000;
    geo.test_size = 100;
    const auto stream = stream_of({"bars", "rings", "checkers", "blobs", "bars-inv", "rings-inv"}, seed, geo);
    const replay::TrainConfig tc;
    const replay::RunStreams rs{seed};
    graph::GraphState g(vae::VaeArch{});
    for (int t = 1; t <= 2; ++t) {
      auto& b = graph::build_basic_node(g, t, seed, rs.init_label(t));
      replay::train_vae(b.model, stream.tasks[t - 1].train.images, tc, rs.train(t));
      b.model.set_trainable(false);
    }
    const std::string before = graph::basic_parameter_hash(g);
    for (int t = 3; t <= 6; ++t) {
      const auto ks = graph::knowledge_novelty(g, stream.tasks[t - 1].train.images, rs.novelty(t));
      auto& s = graph::build_specific_node(g, t, graph::importance_weights(ks), seed, rs.init_label(t));
      replay::train_epochs(
          s.parameters(), stream.tasks[t - 1].train.images, tc, rs.train(t),
          [&](const Tensor& x, nn::Rng& r) { return graph::melbo(s, g, x, 1, r); }, t);
      s.set_trainable(false);
      const Tensor& x = stream.tasks[t - 1].test.images;
      nn::NoGradGuard guard;
      nn::Rng r(seed, "acceptance/melbo");
      const auto mb = graph::melbo(s, g, x, 1, r);
      const auto nll = vae::nll_estimate(graph::SpecificPath(s, g), x, 1000, nn::Rng(seed, "acceptance/iw1000"));
      // Paired per example: MELBO + NLL estimate should sit at or below 0.
      std::vector<double> d(x.rows());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = mb.per_example[i] + nll.per_example[i];
      const MeanSe m = mean_se(d);
      worst = std::max(worst, m.mean / m.se);
      ok += m.mean <= 3.0 * m.se;
      ++total;
    }
    hash_ok += graph::basic_parameter_hash(g) == before;
  }
  return {ok == total && total == 20 && hash_ok == 5,
          fmt("%zu/%zu nodes with MELBO <= log p(x) within 3 s.e. (largest excess %.1f s.e.), Basic hashes unchanged "
              "in %zu/5 seeds",
              ok, total, worst, hash_ok)};
}

// 6. Accumulated shift-term counts against enumeration of every assignment.
Outcome assignment_ledger() {
  std::size_t checked = 0, bad = 0;
  for (std::size_t t = 1; t <= 6; ++t) {
    for (std::size_t k = 1; k <= 4; ++k) {
      std::size_t total = 1;
      for (std::size_t i = 0; i < t; ++i) total *= k;
      for (std::size_t code = 0; code < total; ++code) {
        std::vector<std::vector<std::size_t>> groups(k);
        std::size_t rest = code;
        for (std::size_t a = 1; a <= t; ++a) {
          groups[rest % k].push_back(a);
          rest /= k;
        }
        std::erase_if(groups, [](const auto& g) { return g.empty(); });
        // Oracle: a task modelled by a shared component accumulates t - a + 1 terms.
        std::vector<std::size_t> expected(t, 0);
        for (const auto& g : groups)
          if (g.size() > 1)
            for (std::size_t a : g) expected[a - 1] = t - a + 1;
        const auto s = bounds::assignment_summary(bounds::make_assignment_log(t, groups));
        bad += s.accumulated_terms != expected || s.component_count != groups.size();
        ++checked;
      }
    }
  }
  const auto own = bounds::assignment_summary(bounds::make_assignment_log(4, {{1}, {2}, {3}, {4}}));
  const auto single = bounds::assignment_summary(bounds::make_assignment_log(4, {{1, 2, 3, 4}}));
  const bool own_ok = own.accumulated_terms == std::vector<std::size_t>(4, 0);
  const bool single_ok = single.accumulated_terms == std::vector<std::size_t>{4, 3, 2, 1};
  return {bad == 0 && own_ok && single_ok,
          fmt("%zu assignments enumerated, %zu mismatches; |C| = t gives zero terms: %s; one component gives "
              "(4,3,2,1): %s",
              checked, bad, own_ok ? "yes" : "no", single_ok ? "yes" : "no")};
}

// 7. Forgetting traces of a three-task replay run.
Outcome forgetting() {
  const auto t0 = Clock::now();
  std::size_t disc_up = 0, source_flat = 0, slopes = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto stream = stream_of({"bars", "checkers", "checkers-inv"}, seed);
    replay::GrRunOptions o;
    o.seed = seed;
    o.snapshot_every = 1;
    o.eval_k_prime = 10;
    o.arch.observation.likelihood = vae::Likelihood::gaussian_identity;
    o.arch.observation.normalize = true;
    o.arch.observation.pixel_scale = 255.0;
    const auto run = replay::run_gr_sequence(stream, o);
    const auto d = replay::diagnose_gr_run(stream, o, run.snapshots, replay::DiagnoseOptions{});
    const std::size_t e1 = o.train.epochs, last = d.size();
    std::vector<double> src, disc, kl;
    for (const auto& r : d) {
      src.push_back(r.terms.source_risk);
      disc.push_back(r.terms.discrepancy);
      kl.push_back(r.terms.kl_gap.gap);
    }
    // Task-1 plateau: mean of the last three task-1 epochs.
    const double plateau = (src[e1 - 3] + src[e1 - 2] + src[e1 - 1]) / 3.0;
    double dev = 0.0;
    for (std::size_t e = e1 - 1; e < last; ++e) dev = std::max(dev, std::abs(src[e] / plateau - 1.0));
    std::vector<double> xs, ds, ks;
    for (std::size_t e = e1; e <= last; e += e1) {
      xs.push_back(static_cast<double>(e));
      ds.push_back(disc[e - 1]);
      ks.push_back(kl[e - 1]);
    }
    const double disc_slope = bounds::ls_slope(xs, ds), kl_slope = bounds::ls_slope(xs, ks);
    disc_up += disc[last - 1] > disc[e1 - 1];
    source_flat += dev <= 0.10;
    slopes += kl_slope < disc_slope;
    per_seed += fmt(" [seed %llu: disc %.3f->%.3f, source dev %.0f%%, slopes kl %.3g disc %.3g]",
                    static_cast<unsigned long long>(seed), disc[e1 - 1], disc[last - 1], 100.0 * dev, kl_slope,
                    disc_slope);
  }
  const double secs = seconds_since(t0);
  return {disc_up >= 4 && source_flat >= 4 && slopes >= 4 && secs < 600.0,
          fmt("discrepancy rises in %zu/5, source risk within 10%% in %zu/5, KL-gap slope below discrepancy slope in "
              "%zu/5, %.0f s;",
              disc_up, source_flat, slopes, secs) +
              per_seed};
}

double final_row(const bounds::DiagnosticsLedger& l, std::size_t t, std::size_t j, double* first_se = nullptr) {
  double s = 0.0;
  std::size_t n = 0;
  double first = 0.0;
  for (const auto& r : l.evaluations()) {
    if (r.task_index != t) continue;
    if (j == 0) {
      s += r.nll;
      ++n;
    } else if (r.eval_task == j) {
      first = r.nll;
      if (first_se) *first_se = r.nll_std_error;
    }
  }
  return j == 0 ? s / static_cast<double>(n) : first;
}

// 8. DEGM-ELBO against ELBO-GR at matched budgets.
Outcome degm_vs_gr() {
  const double tau = 600.0 * 144.0 / 784.0;
  std::size_t better = 0, earliest = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto stream = stream_of({"bars", "checkers", "checkers-inv"}, seed);
    replay::GrRunOptions gr;
    gr.seed = seed;
    const auto g = replay::run_gr_sequence(stream, gr);
    graph::DegmConfig dc;
    dc.seed = seed;
    dc.tau = tau;
    const auto d = graph::train_degm_sequence(stream, dc);
    dc.override_rule = graph::Override::force_basic;
    const auto d2 = graph::train_degm_sequence(stream, dc);
    const double gr_avg = final_row(g.ledger, 3, 0), degm_avg = final_row(d.ledger, 3, 0);
    double se1 = 0.0, se2 = 0.0;
    const double degm_first = final_row(d.ledger, 3, 1, &se1), degm2_first = final_row(d2.ledger, 3, 1, &se2);
    better += degm_avg < gr_avg;
    earliest += degm2_first <= degm_first + 3.0 * std::hypot(se1, se2);
    per_seed += fmt(" [seed %llu: GR %.2f, DEGM %.2f; task 1 DEGM %.2f, DEGM-2 %.2f]",
                    static_cast<unsigned long long>(seed), gr_avg, degm_avg, degm_first, degm2_first);
  }
  return {better >= 4 && earliest == 5,
          fmt("DEGM-ELBO below ELBO-GR in %zu/5 seeds, DEGM-2 at least as good on task 1 in %zu/5;", better,
              earliest) +
              per_seed};
}

// 9. Node selection over well-separated domains.
Outcome node_selection() {
  std::size_t hits = 0, batches = 0;
  double worst = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto stream = stream_of({"bars", "rings", "checkers"}, seed);
    graph::DegmConfig dc;
    dc.seed = seed;
    dc.override_rule = graph::Override::force_basic;
    dc.eval_k_prime = 1;
    const auto run = graph::train_degm_sequence(stream, dc);
    std::size_t h = 0, n = 0;
    for (std::size_t j = 1; j <= 3; ++j) {
      for (std::size_t id : run.selections.at({3, j})) {
        ++n;
        h += run.graph.task_of(id) == static_cast<int>(j);
      }
    }
    worst = std::min(worst, static_cast<double>(h) / static_cast<double>(n));
    hits += h;
    batches += n;
  }
  return {worst >= 0.9, fmt("%zu/%zu test batches routed to their own task, worst seed %.0f%%", hits, batches,
                            100.0 * worst)};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Two identical training invocations.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("degm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::size_t same = 0, total = 0;
  for (const auto& [name, text] : std::vector<std::pair<std::string, std::string>>{
           {"elbo_gr", R"({"method":"elbo_gr","stream":["bars","rings","checkers"],"train_size":500,"epochs":3})"},
           {"degm_iwelbo",
            R"({"method":"degm_iwelbo","stream":["bars","checkers","checkers-inv"],"tau":110.2,"train_size":500,"epochs":3})"}}) {
    std::string metrics[2];
    for (int i = 0; i < 2; ++i) {
      cli::ConfigOverrides ov;
      ov.output_dir = (root / name / std::to_string(i)).string();
      cli::cmd_train(cli::parse_config(text, ov));
      metrics[i] = read_file(root / name / std::to_string(i) / "metrics.csv");
    }
    same += !metrics[0].empty() && metrics[0] == metrics[1];
    ++total;
  }
  fs::remove_all(root);
  return {same == total, fmt("%zu/%zu methods produce byte-identical metrics.csv", same, total)};
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

// 11. Hand-built IDX bytes.
Outcome idx_round_trip() {
  const std::vector<std::uint8_t> payload{0, 255, 51, 102, 204, 0, 255, 153, 17, 34, 68, 136};
  std::vector<std::uint8_t> bytes;
  for (std::uint32_t v : {data::kIdxImageMagic, 3u, 2u, 2u}) {
    const auto b = be32(v);
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  const data::Dataset ds = data::parse_idx_images(bytes, "hand");
  bool exact = ds.size() == 3 && ds.dim() == 4;
  for (std::size_t i = 0; exact && i < payload.size(); ++i) exact = ds.images.at(i) == payload[i] / 255.0;

  std::vector<std::uint8_t> labels = be32(data::kIdxLabelMagic);
  for (auto b : be32(3)) labels.push_back(b);
  labels.insert(labels.end(), {7, 0, 9});
  const bool labels_ok = data::parse_idx_labels(labels) == std::vector<int>{7, 0, 9};

  const auto raises = [](auto f, auto tag) {
    try {
      f();
    } catch (const decltype(tag)&) {
      return true;
    } catch (...) {
      return false;
    }
    return false;
  };
  auto bad_magic = bytes;
  bad_magic[3] = 0x04;
  auto truncated = bytes;
  truncated.pop_back();
  auto short_header = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10);
  const bool magic_err =
      raises([&] { data::parse_idx_images(bad_magic, "m"); }, data::IdxBadMagicError("")) &&
      raises([&] { data::parse_idx_labels(bytes); }, data::IdxBadMagicError(""));
  const bool trunc_err = raises([&] { data::parse_idx_images(truncated, "t"); }, data::IdxTruncatedError("")) &&
                         raises([&] { data::parse_idx_images(short_header, "h"); }, data::IdxTruncatedError(""));
  return {exact && labels_ok && magic_err && trunc_err,
          fmt("pixels exact: %s, labels exact: %s, bad magic raises IdxBadMagicError: %s, truncation raises "
              "IdxTruncatedError: %s",
              exact ? "yes" : "no", labels_ok ? "yes" : "no", magic_err ? "yes" : "no", trunc_err ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"autodiff gradients match finite differences", autodiff},
      {"analytic KL matches Monte-Carlo", kl_monte_carlo},
      {"ELBO <= IWELBO-5 <= IWELBO-50", iwelbo_ordering},
      {"importance weights", pi_weights},
      {"MELBO is a lower bound; Basic nodes untouched", melbo_validity},
      {"assignment ledger", assignment_ledger},
      {"forgetting traces", forgetting},
      {"DEGM-ELBO beats ELBO-GR", degm_vs_gr},
      {"node selection", node_selection},
      {"deterministic training", determinism},
      {"IDX parsing", idx_round_trip},
  };
  std::size_t passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    passed += o.pass;
    std::printf("%s criterion %zu: %s (%s) [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, criteria.size());
  return passed == criteria.size() ? 0 : 1;
}
