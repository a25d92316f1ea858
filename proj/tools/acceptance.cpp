// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "memdecode/config.hpp"
#include "memdecode/gradcheck.hpp"
#include "memdecode/retrieval.hpp"

using namespace memdecode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// 1 ------------------------------------------------------------------------

Outcome encoder_params() {
  const EncoderModel m = build_encoder(0);
  return {m.param_count() == 655136, fmt("parameter count %zu (want 655136)", m.param_count())};
}

// 2 ------------------------------------------------------------------------

// Direct evaluation of the contrastive loss, term by term.
double supcon_direct(const Matrix<double>& z, const std::vector<int>& y, double tau, bool include_self) {
  const std::size_t n = z.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i && !include_self) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) d += z(i, k) * z(a, k);
      denom += std::exp(d / tau);
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (y[p] != y[i] || (p == i && !include_self)) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) d += z(i, k) * z(p, k);
      sum += std::log(std::exp(d / tau) / denom);
      ++count;
    }
    total -= sum / static_cast<double>(count);
  }
  return total;
}

Outcome supcon_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  const double taus[] = {0.05, 0.1, 0.5, 1.0};
  for (int b = 0; b < 100; ++b) {
    const std::size_t n = 2 + rng.below(15);
    const std::size_t dim = 2 + rng.below(7);
    Matrix<double> z(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      double ss = 0.0;
      for (std::size_t k = 0; k < dim; ++k) ss += (z(i, k) = rng.normal()) * z(i, k);
      for (std::size_t k = 0; k < dim; ++k) z(i, k) /= std::sqrt(ss);
    }
    // Every class has at least two members so both modes are defined.
    const std::size_t classes = std::max<std::size_t>(1, n / 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(y[i], y[rng.below(i + 1)]);
    const double tau = taus[b % 4];
    worst = std::max(worst, std::abs(supcon_loss(z, y, tau, SupConMode::variant).loss - supcon_direct(z, y, tau, true)));
    worst = std::max(worst,
                     std::abs(supcon_loss(z, y, tau, SupConMode::standard).loss - supcon_direct(z, y, tau, false)));
  }
  double closed = 0.0;
  for (std::size_t n : {2u, 4u, 8u}) {
    Matrix<double> z(n, 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) z(i, 0) = 1.0;
    const std::vector<int> y(n, 0);
    closed = std::max(closed, std::abs(supcon_loss(z, y).loss - static_cast<double>(n) * std::log(double(n))));
  }
  return {worst < 1e-6 && closed < 1e-9,
          fmt("max |loss - direct| %.2e over 100 batches x 2 modes (< 1e-6); N ln N error %.2e (< 1e-9)", worst,
              closed)};
}

// 3 ------------------------------------------------------------------------

Outcome grad_checks() {
  double layer_worst = 0.0;
  bool ok = true;
  for (const auto& c : layer_grad_checks(1)) {
    layer_worst = std::max(layer_worst, c.result.max_rel_error);
    ok = ok && c.result.max_rel_error < 1e-4;
  }
  const auto comp = composite_grad_check(1);
  ok = ok && comp.result.max_rel_error < 1e-3;
  return {ok, fmt("per-layer max rel error %.2e (< 1e-4); encoder+head+loss %.2e over %zu params (< 1e-3)",
                  layer_worst, comp.result.max_rel_error, comp.result.checked)};
}

// 4 ------------------------------------------------------------------------

double gain_db(const std::vector<double>& h, double f, double fs) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < h.size(); ++n) acc += h[n] * std::polar(1.0, -2.0 * std::numbers::pi * f * double(n) / fs);
  return 20.0 * std::log10(std::abs(acc));
}

Outcome preprocessing() {
  SynthConfig sc;
  sc.n_concepts = 1;
  sc.seed = 4;
  const RawTrace raw = synth_trace(sc, 0, 0);
  const RawTrace rr = rereference_occipital(clip_quantiles(raw));
  const RawTrace z = zscore_channels(bandpass_fir(rr, BandSpec::broadband()));
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::size_t c = 0; c < z.samples.cols(); ++c) {
    double m = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < z.samples.rows(); ++i) m += z.samples(i, c);
    m /= double(z.samples.rows());
    for (std::size_t i = 0; i < z.samples.rows(); ++i) ss += (z.samples(i, c) - m) * (z.samples(i, c) - m);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(std::sqrt(ss / double(z.samples.rows())) - 1.0));
  }
  const CleanTrace clean = preprocess(raw);
  const auto taps = design_fir_bandpass(1.0, BandSpec::broadband().effective_high(125.0), 125.0, 501);
  const double g10 = gain_db(taps, 10.0, 125.0), g03 = gain_db(taps, 0.3, 125.0);
  const bool ok = raw.samples.cols() == 16 && rr.samples.cols() == 14 && raw.n_samples() == 9375 &&
                  clean.n_samples() == 8375 && clean.channels.size() == 14 && worst_mean < 1e-6 && worst_std < 1e-6 &&
                  std::abs(g10) <= 0.5 && g03 <= -30.0;
  return {ok, fmt("channels %zu->%zu, samples %zu->%zu, |mean| %.1e, |std-1| %.1e, 10 Hz %.3f dB, 0.3 Hz %.1f dB",
                  raw.samples.cols(), clean.channels.size(), raw.n_samples(), clean.n_samples(), worst_mean,
                  worst_std, g10, g03)};
}

// 5 ------------------------------------------------------------------------

Outcome segmentation_counts() {
  SynthConfig sc;
  sc.n_concepts = 1;
  sc.seed = 5;
  const CleanTrace clean = preprocess(synth_trace(sc, 0, 1));
  const SegmentSet set = segment_pipeline(clean);
  const auto& p = set.provenance;
  std::size_t dropped = 0, planted = 0;
  for (std::size_t offset : {500u, 2730u, 4000u, 6110u}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CleanTrace t = clean;
      for (std::size_t r = offset; r < offset + 100; ++r) t.samples(r, (offset / 10) % 14) *= 10.0;
      SegmentConfig cfg;
      cfg.iforest_seed = seed;
      const SegmentSet s = segment_pipeline(t, cfg);
      ++planted;
      dropped += std::none_of(s.segments.begin(), s.segments.end(),
                              [&](const Segment& g) { return g.offset == offset; });
    }
  }
  const bool ok = p.raw == 828 && p.after_trend == 787 && p.after_outlier == 748 && set.size() == 748 &&
                  dropped == planted;
  return {ok, fmt("raw %zu, after trend %zu, after outlier %zu (828/787/748); planted outlier dropped %zu/%zu",
                  p.raw, p.after_trend, p.after_outlier, dropped, planted)};
}

// 6 ------------------------------------------------------------------------

Outcome chance_calibration() {
  SynthConfig sc;
  sc.n_concepts = 30;
  sc.duration_s = 16.0;
  sc.days = {0, 1};
  sc.seed = 6;
  const PreparedDataset data = prepare_dataset(gen_dataset(sc));
  EvalConfig cfg;
  cfg.backend = Backend::uniform_random;
  cfg.seed = 600;
  cfg.bootstrap_resamples = 1000;
  const auto report = run_trials(data, cfg, 200);
  const double t1 = report.summary.top1.mean, t3 = report.summary.top3.mean;
  return {std::abs(t1 - 0.04) <= 0.01 && std::abs(t3 - 0.12) <= 0.02,
          fmt("200 trials x 25 test concepts: top1 %.4f (0.04 +- 0.01), top3 %.4f (0.12 +- 0.02)", t1, t3)};
}

// 7, 8, 10 -----------------------------------------------------------------

EvalConfig decoding_config() {
  EvalConfig cfg;
  cfg.test_size = 5;
  cfg.train.epochs = 2;
  cfg.train.steps_per_epoch = 100;
  cfg.bootstrap_resamples = 1000;
  cfg.seed = 700;
  return cfg;
}

constexpr std::size_t kDecodingTrials = 5;
constexpr std::size_t kChanceTrials = 100;

/// Day-1 and day-3 results of the separability-0.8 trials, shared by 7, 8 and 10.
const std::vector<std::vector<TrialResult>>& decoding_trials() {
  static const auto trials = [] {
    SynthConfig sc;
    sc.n_concepts = 20;
    sc.separability = 0.8;
    sc.seed = 42;
    const PreparedDataset data = prepare_dataset(gen_dataset(sc));
    std::vector<std::vector<TrialResult>> out;
    for (std::size_t i = 0; i < kDecodingTrials; ++i) out.push_back(run_trial_days(data, decoding_config(), i, {1, 3}));
    return out;
  }();
  return trials;
}

Outcome end_to_end() {
  std::vector<double> top1, top3, seg;
  for (const auto& t : decoding_trials()) {
    top1.push_back(t[0].top1);
    top3.push_back(t[0].top3);
    seg.push_back(t[0].segment_accuracy);
  }
  SynthConfig sc;
  sc.n_concepts = 20;
  sc.separability = 0.0;
  sc.seed = 42;
  const PreparedDataset flat = prepare_dataset(gen_dataset(sc));
  EvalConfig cfg = decoding_config();
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 10;
  cfg.seed = 7000;
  const auto chance = run_trials(flat, cfg, kChanceTrials);
  const double c1 = chance.summary.top1.mean;
  const bool ok = mean_of(top1) >= 0.8 && mean_of(top3) >= 0.95 && std::abs(c1 - 0.2) <= 0.05;
  return {ok, fmt("sep 0.8 (%zu trials, 2x100 steps): day-1 top1 %.3f (>= 0.8), top3 %.3f (>= 0.95), segment %.3f; "
                  "sep 0 (%zu trials, 1x10 steps): top1 %.3f (0.2 +- 0.05)",
                  kDecodingTrials, mean_of(top1), mean_of(top3), mean_of(seg), kChanceTrials, c1)};
}

Outcome clustering() {
  std::vector<double> within, between;
  for (const auto& t : decoding_trials()) {
    within.push_back(t[0].within_cosine);
    between.push_back(t[0].between_cosine);
  }
  const double gap = mean_of(within) - mean_of(between);
  return {gap >= 0.1, fmt("test-concept cosine within %.3f, between %.3f, gap %.3f (>= 0.1)", mean_of(within),
                          mean_of(between), gap)};
}

Outcome day_drift() {
  std::vector<double> d1, d3;
  std::string per;
  for (const auto& t : decoding_trials()) {
    d1.push_back(t[0].top1);
    d3.push_back(t[1].top1);
    per += fmt(" %.1f/%.1f", t[0].top1, t[1].top1);
  }
  return {mean_of(d3) <= mean_of(d1),
          fmt("day-1 top1 %.3f, day-3 top1 %.3f over matched seeds (day1/day3:%s)", mean_of(d1), mean_of(d3),
              per.c_str())};
}

// 9 ------------------------------------------------------------------------

/// The expected variant against the strongest other one.
Outcome winner(const std::vector<VariantResult>& results, const std::string& expected) {
  double mine = -1.0, other = -1.0;
  std::string other_name;
  for (const auto& r : results) {
    const double a = r.report.summary.average.mean;
    if (r.variant.name == expected) {
      mine = a;
    } else if (a > other) {
      other = a;
      other_name = r.variant.name;
    }
  }
  return {mine > other, fmt("%s %.3f vs %s %.3f", expected.c_str(), mine, other_name.c_str(), other)};
}

Outcome ablation() {
  SynthConfig sc;
  sc.n_concepts = 15;
  sc.duration_s = 40.0;
  sc.days = {0, 1};
  sc.seed = 9;
  EvalConfig cfg;
  cfg.test_size = 5;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 60;
  cfg.n_trials = 3;
  cfg.min_band_trials = 3;
  cfg.bootstrap_resamples = 500;
  cfg.seed = 900;
  const auto channels = winner(ablate(gen_channel_localized(sc, "F3"), cfg, single_channel_variants()), "F3");
  const auto bands = winner(ablate(gen_band_localized(sc, "theta"), cfg, band_variants()), "theta");
  return {channels.pass && bands.pass,
          "mean accuracy, 3 trials per variant: channels " + channels.detail + "; bands " + bands.detail};
}

// 11 -----------------------------------------------------------------------

Outcome bootstrap_coverage() {
  Rng rng(11);
  const double mu = 0.5;
  std::size_t covered = 0;
  for (std::size_t rep = 0; rep < 1000; ++rep) {
    std::vector<double> x(50);
    for (auto& v : x) v = rng.normal(mu, 0.2);
    const Interval ci = bootstrap_ci(x, 2000, 0.95, rep);
    covered += ci.low <= mu && mu <= ci.high;
  }
  const double rate = covered / 1000.0;
  return {std::abs(rate - 0.95) <= 0.03, fmt("95%% CI covered the true mean in %.3f of 1000 repetitions (0.95 +- 0.03)", rate)};
}

// 12 -----------------------------------------------------------------------

Outcome retrieval() {
  SynthConfig sc;
  sc.n_concepts = 35;
  sc.days = {0, 1};
  sc.seed = 99;
  const PreparedDataset data = prepare_dataset(gen_dataset(sc));
  const auto concepts = data.concepts();
  TrainingPool pool;
  for (std::size_t i = 0; i < 15; ++i) {
    for (int day : {0, 1}) {
      for (const auto& s : data.find(concepts[i], day)->set.segments) pool.add(s);
    }
  }
  TrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 100;
  tc.seed = 1200;
  const auto model = std::make_shared<const EncoderModel>(train(pool, tc).model);
  std::map<std::size_t, double> top3;
  for (std::size_t budget : {80u, 10u}) {
    DocumentIndex index(model);
    for (std::size_t i = 15; i < 35; ++i) {
      index.index_document(concepts[i], "doc://" + concepts[i], data.find(concepts[i], 0)->set.segments, budget);
    }
    std::size_t hits = 0;
    for (std::size_t i = 15; i < 35; ++i) {
      for (const auto& r : index.query(data.find(concepts[i], 1)->set.segments, budget, 3)) hits += r.doc_id == concepts[i];
    }
    top3[budget] = hits / 20.0;
  }
  const double floor10 = 3.0 * 3.0 / 20.0;
  return {top3[80] >= 0.9 && top3[10] >= floor10,
          fmt("20 documents: top-3 hit rate %.2f at budget 80 (>= 0.9), %.2f at budget 10 (>= %.2f)", top3[80],
              top3[10], floor10)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memdecode acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "run these criteria only")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "encoder parameter count", encoder_params},
      {2, "contrastive loss oracle", supcon_oracle},
      {3, "gradient checks", grad_checks},
      {4, "preprocessing invariants", preprocessing},
      {5, "segmentation counts", segmentation_counts},
      {6, "chance calibration", chance_calibration},
      {7, "end-to-end synthetic decoding", end_to_end},
      {8, "unseen-concept clustering", clustering},
      {9, "ablation discrimination", ablation},
      {10, "day-drift direction", day_drift},
      {11, "bootstrap coverage", bootstrap_coverage},
      {12, "retrieval", retrieval},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2d %-30s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
    ++ran;
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
