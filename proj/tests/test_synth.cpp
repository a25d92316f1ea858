// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "memdecode/preprocess.hpp"
#include "memdecode/synth.hpp"

using namespace memdecode;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_concepts = 3;
  c.duration_s = 20.0;
  c.seed = 11;
  return c;
}

// Power at frequency f (Hz) of x, Hann-windowed.
double power_at(const std::vector<double>& x, std::size_t begin, std::size_t len, double f, double fs) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t i = 0; i < len; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
    const double ph = -2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
    acc += w * x[begin + i] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return std::norm(acc);
}

std::vector<double> column(const Matrix<double>& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

}  // namespace

TEST_CASE("default trace shape") {
  SynthConfig c;
  CHECK(c.n_samples() == 9375);
  c.n_concepts = 1;
  c.days = {0};
  const auto ds = gen_dataset(c);
  REQUIRE(ds.traces.size() == 1);
  const auto& t = ds.traces[0];
  CHECK(t.samples.rows() == 9375);
  CHECK(t.samples.cols() == 16);
  CHECK(t.channels == ChannelSet::canonical16());
  CHECK(t.concept_id == "c000");
  CHECK(ds.manifest.entries[0].file == "c000_day0.csv");
  CHECK(ds.manifest.entries[0].group_id == "synthetic");
  for (double v : t.samples.values()) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) < 1000.0);
  }
}

TEST_CASE("dataset enumerates concepts and days") {
  const auto c = small_config();
  const auto ds = gen_dataset(c);
  CHECK(ds.traces.size() == 9);
  CHECK(ds.manifest.entries.size() == 9);
  CHECK(ds.traces[4].concept_id == "c001");
  CHECK(ds.traces[4].day == 1);
  CHECK(synth_concept_id(42) == "c042");
}

TEST_CASE("generation is deterministic per seed") {
  const auto c = small_config();
  const auto a = synth_trace(c, 1, 3);
  const auto b = synth_trace(c, 1, 3);
  CHECK(a.samples.values() == b.samples.values());
  auto d = c;
  d.seed = 12;
  CHECK(synth_trace(d, 1, 3).samples.values() != a.samples.values());
  CHECK(synth_trace(c, 2, 3).samples.values() != a.samples.values());
  // An individual trace does not depend on how many concepts are generated.
  auto more = c;
  more.n_concepts = 10;
  CHECK(synth_trace(more, 1, 3).samples.values() == a.samples.values());
}

TEST_CASE("pink noise has unit variance and a 1/f spectrum") {
  Rng rng(3);
  const std::size_t len = 1024, segs = 32;
  const auto x = pink_noise(len * segs, rng);
  double mean = 0.0, ss = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) ss += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(ss / static_cast<double>(x.size()) == doctest::Approx(1.0));

  // Least-squares slope of log power against log frequency over 1..50 Hz.
  const double fs = 125.0;
  std::vector<double> lf, lp;
  for (double f = 1.0; f <= 50.0; f *= 1.25) {
    double p = 0.0;
    for (std::size_t s = 0; s < segs; ++s) p += power_at(x, s * len, len, f, fs);
    lf.push_back(std::log10(f));
    lp.push_back(std::log10(p));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lf.size(); ++i) mx += lf[i], my += lp[i];
  mx /= static_cast<double>(lf.size());
  my /= static_cast<double>(lf.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lf.size(); ++i) sxy += (lf[i] - mx) * (lp[i] - my), sxx += (lf[i] - mx) * (lf[i] - mx);
  const double slope = sxy / sxx;
  CHECK(slope > -1.25);
  CHECK(slope < -0.75);
}

TEST_CASE("occipital rereferencing removes the visual noise") {
  auto with = small_config();
  with.visual_noise = 1.5;
  auto without = with;
  without.visual_noise = 0.0;
  const auto a = rereference_occipital(synth_trace(with, 0, 0));
  const auto b = rereference_occipital(synth_trace(without, 0, 0));
  REQUIRE(a.samples.cols() == 14);
  double max_diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.samples.values().size(); ++i) {
    max_diff = std::max(max_diff, std::abs(a.samples.values()[i] - b.samples.values()[i]));
    scale = std::max(scale, std::abs(a.samples.values()[i]));
  }
  CHECK(max_diff < 1e-9 * scale);
  // Before rereferencing the two differ by the visual component.
  const auto ra = synth_trace(with, 0, 0), rb = synth_trace(without, 0, 0);
  CHECK(ra.samples.values() != rb.samples.values());
}

TEST_CASE("channel localization") {
  auto c = small_config();
  c.separability = 1.0;
  c.noise_floor = 0.0;
  c.visual_noise = 0.0;
  const auto ds = gen_channel_localized(c, "F3");
  for (const auto& t : ds.traces) {
    for (std::size_t ch = 0; ch < t.channels.size(); ++ch) {
      double energy = 0.0;
      for (std::size_t i = 0; i < t.samples.rows(); ++i) energy += t.samples(i, ch) * t.samples(i, ch);
      if (t.channels[ch] == "F3") {
        CHECK(energy > 0.0);
      } else {
        CHECK(energy == 0.0);
      }
    }
  }
  CHECK_THROWS_AS(gen_channel_localized(c, "Cz"), Error);
}

TEST_CASE("band localization") {
  auto c = small_config();
  c.separability = 1.0;
  c.noise_floor = 0.0;
  c.visual_noise = 0.0;
  c.days = {0};
  const auto ds = gen_band_localized(c, "theta");
  const auto theta = BandSpec::by_name("theta");
  for (const auto& t : ds.traces) {
    const auto x = column(t.samples, t.channels.require("Fp1"));
    double inside = 0.0, total = 0.0;
    for (double f = 0.25; f < 62.0; f += 0.25) {
      const double p = power_at(x, 0, x.size(), f, 125.0);
      total += p;
      if (f >= theta.low_hz && f <= theta.high_hz) inside += p;
    }
    CHECK(inside / total > 0.98);
  }
  CHECK_THROWS_AS(gen_band_localized(c, "kappa"), Error);
}

TEST_CASE("separability zero carries no fingerprint") {
  auto c = small_config();
  c.separability = 0.0;
  c.noise_floor = 0.0;
  c.visual_noise = 0.0;
  // The only signal left is the unit-variance pink background.
  const auto t = synth_trace(c, 0, 0);
  const auto x = column(t.samples, 0);
  double ss = 0.0;
  for (double v : x) ss += v * v;
  CHECK(std::sqrt(ss / static_cast<double>(x.size())) == doctest::Approx(c.scale_uv).epsilon(1e-9));
}

TEST_CASE("band ranges stay inside the bands") {
  const auto r = synth_band_ranges(125.0);
  const auto& bands = BandSpec::rhythms();
  for (std::size_t b = 0; b < kSynthBands; ++b) {
    CHECK(r[b].first > bands[b].low_hz);
    CHECK(r[b].second < bands[b].high_hz);
    CHECK(r[b].second < 0.4 * 125.0 + 1e-9);
    CHECK(r[b].first < r[b].second);
  }
}

TEST_CASE("config validation and drift") {
  SynthConfig c;
  CHECK(c.drift_weight(0) == 1.0);
  CHECK(c.drift_weight(1) == doctest::Approx(0.85));
  CHECK(c.drift_weight(3) == doctest::Approx(0.7));
  CHECK_THROWS_AS(c.drift_weight(2), Error);
  CHECK_NOTHROW(c.validate());

  auto bad = c;
  bad.separability = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.days = {2};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.days.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.n_concepts = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.duration_s = 10.003;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.drift_day1 = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.target_band = "beta";
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("same concept is closer across days than different concepts") {
  auto c = small_config();
  c.separability = 1.0;
  c.noise_floor = 0.0;
  c.visual_noise = 0.0;
  c.jitter = 0.0;
  c.drift_day1 = 1.0;
  // With full weight and no jitter the per-channel power spectrum is day invariant.
  const auto a0 = column(synth_trace(c, 0, 0).samples, 2);
  const auto a1 = column(synth_trace(c, 0, 1).samples, 2);
  const auto b0 = column(synth_trace(c, 1, 0).samples, 2);
  double same = 0.0, diff = 0.0;
  for (double f = 1.0; f < 45.0; f += 0.5) {
    const double pa0 = power_at(a0, 0, a0.size(), f, 125.0);
    same += std::abs(pa0 - power_at(a1, 0, a1.size(), f, 125.0));
    diff += std::abs(pa0 - power_at(b0, 0, b0.size(), f, 125.0));
  }
  CHECK(same < 0.2 * diff);
}
