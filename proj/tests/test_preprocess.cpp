// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "memdecode/preprocess.hpp"
#include "memdecode/rng.hpp"

using namespace memdecode;

namespace {

RawTrace noisy_trace(std::size_t n, std::uint64_t seed) {
  RawTrace t;
  t.concept_id = "c000";
  t.channels = ChannelSet::canonical16();
  t.samples = Matrix<double>(n, 16);
  Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    const double time = double(r) / 125.0;
    for (std::size_t c = 0; c < 16; ++c) {
      t.samples(r, c) = 30.0 * std::sin(2 * std::numbers::pi * (3.0 + double(c)) * time) +
                        rng.normal(0.0, 10.0) + 5.0 * double(c);
    }
  }
  return t;
}

// |H(f)| of an FIR filter evaluated directly from its taps.
double gain_db(const std::vector<double>& h, double f, double fs) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    acc += h[n] * std::polar(1.0, -2.0 * std::numbers::pi * f * double(n) / fs);
  }
  return 20.0 * std::log10(std::abs(acc));
}

}  // namespace

TEST_CASE("band table") {
  CHECK(BandSpec::by_name("theta") == BandSpec{"theta", 4.0, 7.0});
  CHECK(BandSpec::by_name("gamma").effective_high(125.0) == doctest::Approx(56.25));
  CHECK(BandSpec::broadband().effective_high(125.0) == doctest::Approx(56.25));
  CHECK(BandSpec::by_name("alpha").effective_high(125.0) == 12.0);
  CHECK(BandSpec::rhythms().size() == 5);
  CHECK_THROWS_AS(BandSpec::by_name("mu"), Error);
}

TEST_CASE("pooled quantiles by linear interpolation") {
  Matrix<double> m(2, 2);
  m.values() = {4.0, 1.0, 3.0, 2.0};
  const std::vector<double> qs = {0.0, 0.5, 1.0, 0.25};
  const auto v = pooled_quantiles(m, qs);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 2.5);
  CHECK(v[2] == 4.0);
  CHECK(v[3] == doctest::Approx(1.75));
}

TEST_CASE("clipping bounds all channels jointly") {
  const auto raw = noisy_trace(2000, 1);
  const auto clipped = clip_quantiles(raw);
  const std::vector<double> qs = {0.005, 0.995};
  const auto q = pooled_quantiles(raw.samples, qs);
  for (double v : clipped.samples.values()) {
    CHECK(v >= q[0]);
    CHECK(v <= q[1]);
  }
  CHECK_THROWS_AS(clip_quantiles(raw, 0.9, 0.1), Error);
}

TEST_CASE("re-referencing subtracts the ipsilateral occipital channel") {
  const auto raw = noisy_trace(50, 2);
  const auto rr = rereference_occipital(raw);
  CHECK(rr.channels == ChannelSet::canonical14());
  const auto o1 = raw.channels.require("O1"), o2 = raw.channels.require("O2");
  for (std::size_t r = 0; r < 50; ++r) {
    CHECK(rr.samples(r, rr.channels.require("F3")) ==
          doctest::Approx(raw.samples(r, raw.channels.require("F3")) - raw.samples(r, o1)));
    CHECK(rr.samples(r, rr.channels.require("P4")) ==
          doctest::Approx(raw.samples(r, raw.channels.require("P4")) - raw.samples(r, o2)));
  }
  RawTrace missing = raw;
  missing.channels = ChannelSet::canonical14();
  missing.samples = Matrix<double>(50, 14);
  CHECK_THROWS_AS(rereference_occipital(missing), Error);
}

TEST_CASE("band-pass FIR response") {
  const auto h = design_fir_bandpass(1.0, 56.25, 125.0, 501);
  CHECK(h.size() == 501);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[500 - i]).epsilon(1e-15));
  CHECK(std::abs(gain_db(h, 10.0, 125.0)) <= 0.5);
  CHECK(gain_db(h, 0.3, 125.0) <= -30.0);
  CHECK(gain_db(h, 0.0, 125.0) < -100.0);

  const auto theta = design_fir_bandpass(4.0, 7.0, 125.0, 501);
  CHECK(std::abs(gain_db(theta, 5.5, 125.0)) <= 0.5);
  CHECK(gain_db(theta, 12.0, 125.0) <= -30.0);
  CHECK(gain_db(theta, 1.0, 125.0) <= -30.0);

  CHECK_THROWS_AS(design_fir_bandpass(7.0, 4.0, 125.0), Error);
  CHECK_THROWS_AS(design_fir_bandpass(1.0, 30.0, 125.0, 500), Error);
}

TEST_CASE("filtering keeps length and removes offsets") {
  const auto raw = noisy_trace(3000, 3);
  const auto f = bandpass_fir(raw, BandSpec::broadband());
  CHECK(f.n_samples() == 3000);
  // Per-channel offsets are far outside the pass band.
  for (std::size_t c = 0; c < 16; ++c) {
    double mean = 0.0;
    for (std::size_t r = 600; r < 2400; ++r) mean += f.samples(r, c);
    CHECK(std::abs(mean / 1800.0) < 1.0);
  }
  CHECK_THROWS_AS(bandpass_fir(noisy_trace(400, 1), BandSpec::broadband()), Error);
}

TEST_CASE("z-score and trim") {
  const auto z = zscore_channels(noisy_trace(1000, 4));
  for (std::size_t c = 0; c < 16; ++c) {
    const auto col = z.samples.column(c);
    double mean = 0.0, var = 0.0;
    for (double v : col) mean += v;
    mean /= double(col.size());
    for (double v : col) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var / double(col.size())) - 1.0) < 1e-9);
  }
  RawTrace flat = noisy_trace(100, 5);
  for (std::size_t r = 0; r < 100; ++r) flat.samples(r, 3) = 7.0;
  const auto zf = zscore_channels(flat);
  for (std::size_t r = 0; r < 100; ++r) CHECK(zf.samples(r, 3) == 0.0);

  const auto t = trim_edges(noisy_trace(9375, 6), 4.0);
  CHECK(t.n_samples() == 8375);
  CHECK_THROWS_AS(trim_edges(noisy_trace(1000, 1), 4.0), Error);
}

TEST_CASE("canonical preprocessing chain") {
  const auto raw = noisy_trace(9375, 7);
  const auto clean = preprocess(raw);
  CHECK(clean.channels.size() == 14);
  CHECK(clean.n_samples() == 8375);
  CHECK(clean.steps_applied == canonical_steps());
  // Normalized before trimming; the retained centre stays close to unit scale.
  for (std::size_t c = 0; c < 14; ++c) {
    double ss = 0.0;
    for (double v : clean.samples.column(c)) ss += v * v;
    CHECK(std::sqrt(ss / 8375.0) == doctest::Approx(1.0).epsilon(0.1));
  }

  PreprocessConfig cfg;
  cfg.subset = ChannelSet::parse("C3,F3");
  const auto sub = preprocess(raw, cfg);
  CHECK(sub.channels.join() == "F3,C3");
  CHECK(sub.samples.column(0) == clean.samples.column(clean.channels.require("F3")));

  CHECK_THROWS_AS(restrict_channels(clean, ChannelSet::parse("O1")), Error);
}

TEST_CASE("documented preprocessing examples") {
  SUBCASE("z-score of 1,2,3") {
    RawTrace t = noisy_trace(3, 1);
    for (std::size_t r = 0; r < 3; ++r) t.samples(r, 0) = double(r + 1);
    const auto z = zscore_channels(t);
    CHECK(z.samples(0, 0) == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(z.samples(1, 0) == doctest::Approx(0.0));
    CHECK(z.samples(2, 0) == doctest::Approx(1.224745).epsilon(1e-6));
  }
  SUBCASE("ramp with a spike is clipped to the sorted-order quantile") {
    RawTrace t;
    t.channels = ChannelSet::parse("F3");
    t.samples = Matrix<double>(10000, 1);
    for (std::size_t i = 0; i < 10000; ++i) t.samples(i, 0) = double(i);
    t.samples(1234, 0) = 1e6;
    std::vector<double> sorted = t.samples.values();
    std::sort(sorted.begin(), sorted.end());
    const double pos = 0.995 * 9999.0;
    const auto lo = std::size_t(std::floor(pos));
    const double q = sorted[lo] + (pos - double(lo)) * (sorted[lo + 1] - sorted[lo]);
    const auto clipped = clip_quantiles(t);
    CHECK(clipped.samples(1234, 0) == doctest::Approx(q).epsilon(1e-12));
    // A second pass only nudges values sitting on a bound, by less than the
    // gap between the neighbouring order statistics.
    const auto twice = clip_quantiles(clipped);
    const double lo_bound = *std::min_element(clipped.samples.values().begin(), clipped.samples.values().end());
    for (std::size_t i = 0; i < 10000; ++i) {
      const double a = clipped.samples(i, 0), b = twice.samples(i, 0);
      if (a != b) {
        CHECK((a == q || a == lo_bound));
        CHECK(std::abs(a - b) < 1.0);
      }
    }
  }
  SUBCASE("constant trace is unchanged by clipping") {
    RawTrace t = noisy_trace(20, 2);
    for (auto& v : t.samples.values()) v = 3.5;
    CHECK(clip_quantiles(t).samples == t.samples);
  }
  SUBCASE("self-cancelling and zero references") {
    RawTrace t = noisy_trace(40, 3);
    const auto t3 = t.channels.require("T3"), o1 = t.channels.require("O1");
    for (std::size_t r = 0; r < 40; ++r) t.samples(r, t3) = t.samples(r, o1);
    const auto rr = rereference_occipital(t);
    for (double v : rr.samples.column(rr.channels.require("T3"))) CHECK(v == 0.0);

    RawTrace z = noisy_trace(40, 4);
    for (std::size_t r = 0; r < 40; ++r) z.samples(r, 14) = z.samples(r, 15) = 0.0;
    const auto zr = rereference_occipital(z);
    CHECK(zr.samples.column(zr.channels.require("Fp2")) == z.samples.column(1));
  }
  SUBCASE("10 Hz sine passes with unit amplitude") {
    RawTrace t;
    t.channels = ChannelSet::parse("F3,F4");
    t.samples = Matrix<double>(2000, 2);
    for (std::size_t i = 0; i < 2000; ++i) {
      t.samples(i, 0) = std::sin(2 * std::numbers::pi * 10.0 * double(i) / 125.0);
      t.samples(i, 1) = 4.0;
    }
    const auto f = bandpass_fir(t, BandSpec::broadband());
    double peak = 0.0, dc = 0.0;
    for (std::size_t i = 250; i < 1750; ++i) {
      peak = std::max(peak, std::abs(f.samples(i, 0)));
      dc = std::max(dc, std::abs(f.samples(i, 1)));
    }
    CHECK(peak == doctest::Approx(1.0).epsilon(0.05));
    CHECK(dc < 0.01);
  }
  SUBCASE("filtering is linear") {
    const auto x = noisy_trace(1200, 5), y = noisy_trace(1200, 6);
    RawTrace mix = x;
    for (std::size_t i = 0; i < mix.samples.size(); ++i) {
      mix.samples.values()[i] = 2.0 * x.samples.values()[i] - 0.5 * y.samples.values()[i];
    }
    const auto band = BandSpec::by_name("beta");
    const auto fx = bandpass_fir(x, band), fy = bandpass_fir(y, band), fm = bandpass_fir(mix, band);
    double worst = 0.0;
    for (std::size_t i = 0; i < fm.samples.size(); ++i) {
      worst = std::max(worst, std::abs(fm.samples.values()[i] -
                                       (2.0 * fx.samples.values()[i] - 0.5 * fy.samples.values()[i])));
    }
    CHECK(worst < 1e-9);
  }
  SUBCASE("zero trims and full subsets are identities") {
    const auto t = noisy_trace(100, 7);
    CHECK(trim_edges(t, 0.0).samples == t.samples);
    const auto clean = preprocess(noisy_trace(9375, 8));
    CHECK(restrict_channels(clean, ChannelSet::canonical14()).samples == clean.samples);
    CHECK(restrict_channels(clean, ChannelSet::parse("F3")).channels.size() == 1);
  }
  SUBCASE("determinism and theta band") {
    const auto raw = noisy_trace(9375, 9);
    CHECK(preprocess(raw).samples == preprocess(raw).samples);
    PreprocessConfig cfg;
    cfg.band = BandSpec::by_name("theta");
    const auto th = preprocess(raw, cfg);
    CHECK(th.n_samples() == 8375);
    CHECK(th.samples != preprocess(raw).samples);
  }
}
