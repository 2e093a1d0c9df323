#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "degm/data/stream.hpp"
#include "degm/data/synth.hpp"
#include "degm/nn/errors.hpp"
#include "degm/replay/diagnose.hpp"
#include "degm/replay/replay.hpp"
#include "degm/replay/trainer.hpp"

using namespace degm;
using namespace degm::replay;
using nn::Tensor;

namespace {

bool same_parameters(const vae::VaeModel& a, const vae::VaeModel& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin(), pb[i].data().end())) {
      return false;
    }
  }
  return true;
}

data::TaskStream small_stream(const std::vector<std::string>& names, std::size_t train, std::size_t test,
                              std::uint64_t seed) {
  std::vector<data::DomainSpec> specs;
  for (const auto& n : names) specs.push_back(data::DomainSpec::parse(n));
  data::StreamGeometry g;
  g.train_size = train;
  g.test_size = test;
  return data::make_cross_domain_stream(specs, g, seed);
}

Tensor ramp(std::size_t n, std::size_t d, double offset) {
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = offset + static_cast<double>(i);
  return Tensor::matrix(n, d, v);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i + 1);
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST_CASE("zero-weight decoder emits one half everywhere before binarization") {
  vae::VaeModel m = vae::build_vae({}, 3);
  for (const auto& l : m.decoder_out().layers()) {
    for (Tensor p : {l.weight, l.bias})
      for (double& v : p.mutable_data()) v = 0.0;
  }
  const PseudoDataset means = generate_pseudo(m, 50, nn::Rng(1, "pseudo"), false);
  CHECK(means.samples.rows() == 50);
  CHECK(means.samples.cols() == 144);
  for (double v : means.samples.data()) CHECK(v == 0.5);

  const PseudoDataset drawn = generate_pseudo(m, 200, nn::Rng(1, "pseudo"), true);
  double mean = 0.0;
  for (double v : drawn.samples.data()) {
    CHECK((v == 0.0 || v == 1.0));
    mean += v;
  }
  mean /= static_cast<double>(drawn.samples.numel());
  CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<double>(drawn.samples.numel())));
}

TEST_CASE("pseudo generation is deterministic per stream and rejects n = 0") {
  const vae::VaeModel m = vae::build_vae({}, 5);
  const auto a = generate_pseudo(m, 30, nn::Rng(9, "pseudo"), true, 2);
  const auto b = generate_pseudo(m, 30, nn::Rng(9, "pseudo"), true, 2);
  const auto c = generate_pseudo(m, 30, nn::Rng(10, "pseudo"), true, 2);
  CHECK(std::ranges::equal(a.samples.data(), b.samples.data()));
  CHECK_FALSE(std::ranges::equal(a.samples.data(), c.samples.data()));
  CHECK(a.source_task_count == 2);
  CHECK(a.generation_seed == b.generation_seed);
  CHECK(a.generation_seed != c.generation_seed);
  CHECK_THROWS_AS(generate_pseudo(m, 0, nn::Rng(9, "pseudo")), std::invalid_argument);
}

TEST_CASE("gaussian models replay decoder means") {
  vae::VaeArch arch;
  arch.observation.likelihood = vae::Likelihood::gaussian_identity;
  const vae::VaeModel m = vae::build_vae(arch, 2);
  const nn::Rng rng(4, "pseudo");
  const auto p = generate_pseudo(m, 20, rng, true);
  nn::Rng zr = rng.child("z");
  nn::NoGradGuard guard;
  const Tensor means = m.decode(vae::draw_noise(zr, 20, arch.latent_dim));
  CHECK(std::ranges::equal(p.samples.data(), means.data()));
}

TEST_CASE("pseudo data from a bars model matches the training activity") {
  const data::Dataset bars = data::synth_generate(data::Family::bars, 2000, 12, 12, 21);
  vae::VaeModel m = vae::build_vae({}, 21);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 3e-3;
  train_vae(m, bars.images, cfg, nn::Rng(21, "test/bars"));
  const auto pseudo = generate_pseudo(m, 2000, nn::Rng(21, "test/pseudo"));
  double train_mean = 0.0, pseudo_mean = 0.0;
  for (double v : bars.images.data()) train_mean += v;
  for (double v : pseudo.samples.data()) {
    CHECK((v == 0.0 || v == 1.0));
    pseudo_mean += v;
  }
  train_mean /= static_cast<double>(bars.images.numel());
  pseudo_mean /= static_cast<double>(pseudo.samples.numel());
  CHECK(std::abs(pseudo_mean - train_mean) < 0.1);
}

TEST_CASE("mixing keeps every row, in source order, with fair coins") {
  const std::size_t n = 1000, d = 3;
  PseudoDataset rep;
  rep.samples = ramp(n, d, 0.0);
  const Tensor fresh = ramp(n, d, 1e6);
  const MixedDataset mixed = mix_datasets(rep, fresh, nn::Rng(7, "mix"));
  REQUIRE(mixed.size() == 2 * n);
  CHECK(mixed.samples.rows() == 2 * n);
  CHECK(mixed.count(Source::replay) == n);
  CHECK(mixed.count(Source::fresh) == n);

  std::size_t i_rep = 0, i_new = 0;
  for (std::size_t r = 0; r < mixed.size(); ++r) {
    const auto row = mixed.samples.data().subspan(r * d, d);
    const bool from_replay = mixed.flags[r] == Source::replay;
    const auto& src = from_replay ? rep.samples : fresh;
    const std::size_t i = from_replay ? i_rep++ : i_new++;
    CHECK(std::ranges::equal(row, src.data().subspan(i * d, d)));
  }

  // Before either source runs out the flags are Bin(m, 1/2).
  const std::size_t m = n;
  const auto prefix = static_cast<double>(std::count(mixed.flags.begin(), mixed.flags.begin() + m, Source::replay));
  CHECK(std::abs(prefix - 0.5 * m) <= 3.0 * std::sqrt(0.25 * m));

  const MixedDataset again = mix_datasets(rep, fresh, nn::Rng(7, "mix"));
  CHECK(again.flags == mixed.flags);
  CHECK(std::ranges::equal(again.samples.data(), mixed.samples.data()));
}

TEST_CASE("flag runs follow the geometric law of fair coins") {
  const std::size_t n = 20000;
  PseudoDataset rep;
  rep.samples = Tensor::zeros({n, 1});
  const MixedDataset mixed = mix_datasets(rep, Tensor::full({n, 1}, 1.0), nn::Rng(11, "mix"));
  // Runs inside a prefix where both sources are still open; the last one is dropped as truncated.
  const std::size_t prefix = 3 * n / 2;
  std::size_t i_rep = 0, i_new = 0;
  for (std::size_t i = 0; i < prefix; ++i) (mixed.flags[i] == Source::replay ? i_rep : i_new)++;
  REQUIRE(i_rep < n);
  REQUIRE(i_new < n);
  std::vector<std::size_t> lengths;
  std::size_t len = 1;
  for (std::size_t i = 1; i < prefix; ++i) {
    if (mixed.flags[i] == mixed.flags[i - 1]) {
      ++len;
    } else {
      lengths.push_back(len);
      len = 1;
    }
  }
  constexpr std::size_t kBins = 7;  // lengths 1..6 and >= 7
  std::vector<double> observed(kBins, 0.0);
  for (auto l : lengths) observed[std::min(l, kBins) - 1] += 1.0;
  const double total = static_cast<double>(lengths.size());
  double chi2 = 0.0;
  for (std::size_t k = 1; k <= kBins; ++k) {
    const double p = k < kBins ? std::ldexp(1.0, -static_cast<int>(k)) : std::ldexp(1.0, -static_cast<int>(kBins - 1));
    const double expected = p * total;
    chi2 += (observed[k - 1] - expected) * (observed[k - 1] - expected) / expected;
  }
  CHECK(chi2 < 16.812);  // chi-squared, 6 degrees of freedom, alpha = 0.01
}

TEST_CASE("empty replay keeps the new data unchanged") {
  const Tensor fresh = ramp(17, 4, 0.5);
  const MixedDataset a = mix_datasets(std::nullopt, fresh, nn::Rng(1, "mix"));
  CHECK(a.size() == 17);
  CHECK(a.count(Source::fresh) == 17);
  CHECK(std::ranges::equal(a.samples.data(), fresh.data()));

  PseudoDataset wide;
  wide.samples = ramp(3, 5, 0.0);
  CHECK_THROWS_AS(mix_datasets(wide, fresh, nn::Rng(1, "mix")), ShapeError);
}

TEST_CASE("replay size is the rounded multiple of the examples seen") {
  CHECK(replay_size(2000, 1.0) == 2000);
  CHECK(replay_size(4000, 0.5) == 2000);
  CHECK(replay_size(3, 0.5) == 2);
  CHECK(replay_size(10, 0.0) == 0);
  CHECK_THROWS_AS(replay_size(10, -0.1), std::invalid_argument);

  const auto stream = small_stream({"bars", "rings", "checkers"}, 120, 20, 4);
  const vae::VaeModel m = vae::build_vae({}, 4);
  const RunStreams streams{4};
  TrainConfig cfg;
  for (std::size_t t = 1; t <= 3; ++t) {
    const MixedDataset mixed = gr_training_set(stream, t, &m, cfg, streams);
    CHECK(mixed.count(Source::replay) == 120 * (t - 1));
    CHECK(mixed.count(Source::fresh) == 120);
  }
  cfg.replay_ratio = 0.25;
  CHECK(gr_training_set(stream, 3, &m, cfg, streams).count(Source::replay) == 60);
  CHECK_THROWS_AS(gr_training_set(stream, 2, nullptr, cfg, streams), std::invalid_argument);
  CHECK_THROWS_AS(gr_training_set(stream, 4, &m, cfg, streams), std::invalid_argument);
}

TEST_CASE("task-1 replay training is bit-identical to plain training") {
  auto stream = small_stream({"blobs", "bars"}, 300, 40, 12);
  stream.tasks.resize(1);
  GrRunOptions opt;
  opt.seed = 12;
  opt.train.epochs = 3;
  opt.eval_k_prime = 5;
  const GrRun run = run_gr_sequence(stream, opt);

  const RunStreams streams{12};
  vae::VaeModel plain = vae::build_vae(opt.arch, 12, streams.init_label(1));
  const auto metrics = train_vae(plain, stream.tasks[0].train.images, opt.train, streams.train(1));
  CHECK(same_parameters(run.model, plain));
  REQUIRE(metrics.size() == run.epochs.size());
  for (std::size_t e = 0; e < metrics.size(); ++e) CHECK(metrics[e].objective == run.epochs[e].objective);
}

TEST_CASE("cold start retrains task t from its own initialization") {
  const auto stream = small_stream({"bars", "rings"}, 150, 20, 8);
  GrRunOptions opt;
  opt.seed = 8;
  opt.train.epochs = 2;
  opt.train.warm_start = false;
  opt.eval_k_prime = 2;
  const GrRun run = run_gr_sequence(stream, opt);

  const RunStreams streams{8};
  vae::VaeModel first = vae::build_vae(opt.arch, 8, streams.init_label(1));
  train_vae(first, stream.tasks[0].train.images, opt.train, streams.train(1));
  const MixedDataset mixed = gr_training_set(stream, 2, &first, opt.train, streams);
  vae::VaeModel second = vae::build_vae(opt.arch, 8, streams.init_label(2));
  train_vae(second, mixed.samples, opt.train, streams.train(2), 2);
  CHECK(same_parameters(run.model, second));
}

TEST_CASE("run ledger, epochs and snapshots are indexed consistently") {
  const auto stream = small_stream({"bars", "rings", "checkers"}, 100, 20, 5);
  GrRunOptions opt;
  opt.seed = 5;
  opt.train.epochs = 2;
  opt.eval_k_prime = 2;
  opt.snapshot_every = 4;
  const GrRun run = run_gr_sequence(stream, opt);
  const auto& evals = run.ledger.evaluations();
  REQUIRE(evals.size() == 6);
  std::size_t i = 0;
  for (std::size_t t = 1; t <= 3; ++t) {
    for (std::size_t j = 1; j <= t; ++j, ++i) {
      CHECK(evals[i].task_index == t);
      CHECK(evals[i].eval_task == j);
      CHECK(evals[i].epoch == 2 * t);
      CHECK(evals[i].k_prime == 2);
      CHECK(std::isfinite(evals[i].nll));
    }
  }
  REQUIRE(run.epochs.size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(run.epochs[e].global_epoch == e + 1);
    CHECK(run.epochs[e].task_index == e / 2 + 1);
    CHECK(run.epochs[e].task_epoch == e % 2 + 1);
  }
  std::vector<std::size_t> kept;
  for (const auto& [g, model] : run.snapshots) kept.push_back(g);
  CHECK(kept == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(same_parameters(run.snapshots.at(6), run.model));

  const GrRun again = run_gr_sequence(stream, opt);
  CHECK(same_parameters(again.model, run.model));
  for (std::size_t k = 0; k < evals.size(); ++k) CHECK(again.ledger.evaluations()[k].nll == evals[k].nll);
}

TEST_CASE("training loss trends downward across epochs") {
  // Sign test over seeds on the per-seed Spearman correlation of epoch and loss.
  std::size_t negative = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const data::Dataset d = data::synth_generate(data::Family::rings, 400, 12, 12, seed);
    vae::VaeModel m = vae::build_vae({}, seed);
    TrainConfig cfg;
    const auto metrics = train_vae(m, d.images, cfg, nn::Rng(seed, "test/trend"));
    std::vector<double> epochs, losses;
    for (const auto& e : metrics) {
      epochs.push_back(static_cast<double>(e.task_epoch));
      losses.push_back(-e.objective);
    }
    if (spearman(epochs, losses) < 0.0) ++negative;
  }
  // P(Bin(20, 1/2) >= 15) = 0.021 < 0.05.
  CHECK(negative >= 15);
}

TEST_CASE("earliest task is forgotten most over three cross-domain tasks") {
  const auto stream = small_stream({"bars", "checkers", "checkers-inv"}, 2000, 500, 1);
  GrRunOptions opt;
  opt.seed = 1;
  opt.eval_k_prime = 50;
  const GrRun run = run_gr_sequence(stream, opt);
  double nll[4][4] = {};
  for (const auto& r : run.ledger.evaluations()) nll[r.task_index][r.eval_task] = r.nll;
  CHECK(nll[3][1] > nll[1][1]);
  const double loss1 = nll[3][1] - nll[1][1];
  const double loss2 = nll[3][2] - nll[2][2];
  CHECK(loss1 > loss2);
  CHECK(nll[3][1] > nll[3][2]);
  CHECK(nll[3][1] > nll[3][3]);
}

TEST_CASE("diagnostics cover every snapshot epoch with the right sets and pool") {
  const auto stream = small_stream({"bars", "rings"}, 120, 30, 6);
  GrRunOptions opt;
  opt.seed = 6;
  opt.train.epochs = 3;
  opt.eval_k_prime = 2;
  opt.snapshot_every = 1;
  const GrRun run = run_gr_sequence(stream, opt);
  DiagnoseOptions dopt;
  dopt.pool_size = 3;
  const auto records = diagnose_gr_run(stream, opt, run.snapshots, dopt);
  REQUIRE(records.size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(records[e].epoch == e + 1);
    CHECK(records[e].task_index == e / 3 + 1);
    CHECK(records[e].task_epoch == e % 3 + 1);
  }

  // Epoch 5: task 2, pool = snapshots 3, 4, 5, mixed set rebuilt from the task-1 model.
  const RunStreams streams{6};
  const MixedDataset mixed = gr_training_set(stream, 2, &run.snapshots.at(3), opt.train, streams);
  bounds::HypothesisPool pool;
  for (std::size_t g = 3; g <= 5; ++g) {
    pool.push_back(bounds::reconstruction_hypothesis(
        std::make_shared<const vae::VaeModel>(run.snapshots.at(g).clone()), "s"));
  }
  bounds::LelboOptions lo;
  lo.rng = streams.diagnostics();
  const auto direct = bounds::lelbo_breakdown(
      run.snapshots.at(5), {stream.tasks[0].test.images, stream.tasks[1].test.images}, mixed.samples, pool, lo);
  CHECK(records[4].terms.source_risk == direct.source_risk);
  CHECK(records[4].terms.target_risk == direct.target_risk);
  CHECK(records[4].terms.discrepancy == direct.discrepancy);
  CHECK(records[4].terms.kl_gap.gap == direct.kl_gap.gap);
  CHECK(records[4].terms.slack == direct.slack);

  auto missing = run.snapshots;
  missing.erase(3);
  CHECK_THROWS_AS(diagnose_gr_run(stream, opt, missing, dopt), std::invalid_argument);
}
