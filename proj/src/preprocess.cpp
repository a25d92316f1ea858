// SPDX-License-Identifier: Apache-2.0

#include "memdecode/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "memdecode/kernels/kernels.hpp"

namespace memdecode {

double BandSpec::effective_high(double sample_rate_hz) const {
  return std::min(high_hz, kNyquistClampFraction * sample_rate_hz);
}

const std::vector<BandSpec>& BandSpec::rhythms() {
  static const std::vector<BandSpec> bands = {
      {"delta", 1.0, 3.0},   {"theta", 4.0, 7.0},    {"alpha", 8.0, 12.0},
      {"beta", 13.0, 30.0},  {"gamma", 30.0, 100.0},
  };
  return bands;
}

BandSpec BandSpec::by_name(std::string_view name) {
  if (name == "broadband") return broadband();
  for (const auto& b : rhythms()) {
    if (b.name == name) return b;
  }
  throw Error("unknown frequency band: " + std::string(name));
}

std::vector<double> pooled_quantiles(const Matrix<double>& samples, std::span<const double> qs) {
  if (samples.empty()) throw Error("quantile of an empty trace");
  std::vector<double> pool = samples.values();
  const std::size_t n = pool.size();
  std::vector<double> out;
  out.reserve(qs.size());
  for (double q : qs) {
    const double h = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(lo), pool.end());
    const double a = pool[lo];
    // the (lo+1)-th order statistic is the minimum of the upper partition
    const double b =
        hi == lo ? a : *std::min_element(pool.begin() + static_cast<std::ptrdiff_t>(hi), pool.end());
    out.push_back(a + (h - static_cast<double>(lo)) * (b - a));
  }
  return out;
}

RawTrace clip_quantiles(const RawTrace& trace, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw Error("clip quantiles must satisfy 0 <= lo < hi <= 1");
  if (trace.samples.empty()) throw Error("cannot clip an empty trace");
  const double qs[2] = {lo, hi};
  const auto limits = pooled_quantiles(trace.samples, qs);
  RawTrace out = trace;
  for (double& v : out.samples.values()) v = std::clamp(v, limits[0], limits[1]);
  return out;
}

RawTrace rereference_occipital(const RawTrace& trace) {
  const auto o1_idx = trace.channels.index_of("O1");
  const auto o2_idx = trace.channels.index_of("O2");
  if (!o1_idx || !o2_idx) throw Error("re-referencing needs both O1 and O2");
  const std::size_t o1 = *o1_idx;
  const std::size_t o2 = *o2_idx;

  std::vector<std::string> labels;
  std::vector<std::size_t> src, ref;
  for (std::size_t c = 0; c < trace.channels.size(); ++c) {
    if (c == o1 || c == o2) continue;
    labels.push_back(trace.channels[c]);
    src.push_back(c);
    ref.push_back(occipital_reference(trace.channels[c]) == "O1" ? o1 : o2);
  }

  RawTrace out;
  out.concept_id = trace.concept_id;
  out.day = trace.day;
  out.sample_rate_hz = trace.sample_rate_hz;
  out.channels = ChannelSet(std::move(labels));
  out.samples = Matrix<double>(trace.n_samples(), src.size());
  for (std::size_t r = 0; r < trace.n_samples(); ++r) {
    for (std::size_t c = 0; c < src.size(); ++c) {
      out.samples(r, c) = trace.samples(r, src[c]) - trace.samples(r, ref[c]);
    }
  }
  return out;
}

namespace {

std::vector<double> unit_dc_lowpass(double cutoff_hz, double sample_rate_hz, std::size_t n_taps) {
  const double fc = cutoff_hz / sample_rate_hz;
  const double mid = static_cast<double>(n_taps - 1) / 2.0;
  const double span = static_cast<double>(n_taps - 1);
  std::vector<double> h(n_taps);
  double sum = 0.0;
  for (std::size_t n = 0; n < n_taps; ++n) {
    const double m = static_cast<double>(n) - mid;
    const double x = 2.0 * fc * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / span);
    h[n] = 2.0 * fc * sinc * window;
    sum += h[n];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

std::vector<double> design_fir_bandpass(double low_hz, double high_hz, double sample_rate_hz,
                                        std::size_t n_taps) {
  if (n_taps < 3 || n_taps % 2 == 0) throw Error("FIR tap count must be odd and >= 3");
  if (!(sample_rate_hz > 0.0)) throw Error("sample rate must be positive");
  const double high = std::min(high_hz, kNyquistClampFraction * sample_rate_hz);
  if (!(low_hz > 0.0) || low_hz >= high) {
    throw Error("band-pass low cutoff " + std::to_string(low_hz) +
                " Hz is not below the clamped high cutoff " + std::to_string(high) + " Hz");
  }
  const auto hi = unit_dc_lowpass(high, sample_rate_hz, n_taps);
  const auto lo = unit_dc_lowpass(low_hz, sample_rate_hz, n_taps);
  std::vector<double> taps(n_taps);
  for (std::size_t i = 0; i < n_taps; ++i) taps[i] = hi[i] - lo[i];
  // exact symmetry, independent of rounding in the two halves
  for (std::size_t i = 0; i < n_taps / 2; ++i) {
    const double s = 0.5 * (taps[i] + taps[n_taps - 1 - i]);
    taps[i] = taps[n_taps - 1 - i] = s;
  }
  return taps;
}

RawTrace bandpass_fir(const RawTrace& trace, const BandSpec& band, std::size_t n_taps) {
  if (trace.n_samples() < n_taps) {
    throw Error("trace of " + std::to_string(trace.n_samples()) + " samples is shorter than the " +
                std::to_string(n_taps) + "-tap filter");
  }
  const auto taps = design_fir_bandpass(band.low_hz, band.high_hz, trace.sample_rate_hz, n_taps);
  RawTrace out = trace;
  std::vector<double> x(trace.n_samples()), y(trace.n_samples());
  for (std::size_t c = 0; c < trace.samples.cols(); ++c) {
    for (std::size_t r = 0; r < x.size(); ++r) x[r] = trace.samples(r, c);
    kernels::fir_same(x.data(), x.size(), taps.data(), taps.size(), y.data());
    out.samples.set_column(c, y);
  }
  return out;
}

void zscore_columns(std::size_t rows, std::size_t cols, double* data) {
  if (rows == 0) return;
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += data[r * cols + c];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = data[r * cols + c] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      double& v = data[r * cols + c];
      v = sd < 1e-12 ? 0.0 : (v - mean) / sd;
    }
  }
}

RawTrace zscore_channels(const RawTrace& trace) {
  RawTrace out = trace;
  zscore_columns(out.samples.rows(), out.samples.cols(), out.samples.data());
  return out;
}

RawTrace trim_edges(const RawTrace& trace, double seconds) {
  if (seconds < 0.0) throw Error("trim seconds must be nonnegative");
  const auto cut = static_cast<std::size_t>(std::llround(seconds * trace.sample_rate_hz));
  if (cut == 0) return trace;
  if (trace.n_samples() <= 2 * cut) {
    throw Error("trace of " + std::to_string(trace.n_samples()) + " samples is too short to trim " +
                std::to_string(cut) + " samples from each end");
  }
  RawTrace out = trace;
  const std::size_t n = trace.n_samples() - 2 * cut;
  out.samples = Matrix<double>(n, trace.samples.cols());
  std::copy_n(trace.samples.data() + cut * trace.samples.cols(), n * trace.samples.cols(),
              out.samples.data());
  return out;
}

CleanTrace preprocess(const RawTrace& raw, const PreprocessConfig& config) {
  CleanTrace clean;
  RawTrace t = clip_quantiles(raw, config.clip_lo, config.clip_hi);
  clean.steps_applied.push_back("clip");
  t = rereference_occipital(t);
  clean.steps_applied.push_back("rereference");
  t = bandpass_fir(t, config.band, config.taps);
  clean.steps_applied.push_back("bandpass");
  t = zscore_channels(t);
  clean.steps_applied.push_back("zscore");
  t = trim_edges(t, config.trim_seconds);
  clean.steps_applied.push_back("trim");

  clean.concept_id = t.concept_id;
  clean.day = t.day;
  clean.sample_rate_hz = t.sample_rate_hz;
  clean.channels = std::move(t.channels);
  clean.samples = std::move(t.samples);
  if (config.subset) return restrict_channels(clean, *config.subset);
  return clean;
}

CleanTrace restrict_channels(const CleanTrace& clean, const ChannelSet& subset) {
  if (subset.empty()) throw Error("channel subset is empty");
  std::vector<std::size_t> keep;
  for (const auto& l : subset.labels()) clean.channels.require(l);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < clean.channels.size(); ++c) {
    if (subset.contains(clean.channels[c])) {
      keep.push_back(c);
      labels.push_back(clean.channels[c]);
    }
  }
  CleanTrace out;
  out.concept_id = clean.concept_id;
  out.day = clean.day;
  out.sample_rate_hz = clean.sample_rate_hz;
  out.steps_applied = clean.steps_applied;
  out.channels = ChannelSet(std::move(labels));
  out.samples = Matrix<double>(clean.n_samples(), keep.size());
  for (std::size_t r = 0; r < clean.n_samples(); ++r) {
    for (std::size_t c = 0; c < keep.size(); ++c) out.samples(r, c) = clean.samples(r, keep[c]);
  }
  return out;
}

}  // namespace memdecode
