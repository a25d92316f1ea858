// SPDX-License-Identifier: Apache-2.0

#include "memdecode/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "memdecode/preprocess.hpp"
#include "memdecode/rng.hpp"

namespace memdecode {

namespace {

constexpr std::uint64_t kFingerprintStream = 1;
constexpr std::uint64_t kDayStream = 2;
constexpr std::uint64_t kTraceStream = 3;

std::uint64_t trace_key(std::size_t concept_index, int day) {
  return static_cast<std::uint64_t>(concept_index) * 16 + static_cast<std::uint64_t>(day);
}

std::size_t band_index(const std::string& name) {
  const auto& bands = BandSpec::rhythms();
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (bands[b].name == name) return b;
  }
  throw Error("unknown frequency band: " + name);
}

}  // namespace

std::size_t SynthConfig::n_samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

double SynthConfig::drift_weight(int day) const {
  switch (day) {
    case 0: return drift_day0;
    case 1: return drift_day1;
    case 3: return drift_day3;
  }
  throw Error("no drift weight for day " + std::to_string(day));
}

void SynthConfig::validate() const {
  if (n_concepts < 1) throw Error("synth: need at least one concept");
  if (days.empty()) throw Error("synth: no days");
  for (int d : days) {
    if (!valid_day(d)) throw Error("synth: invalid day " + std::to_string(d));
    const double w = drift_weight(d);
    if (!(w >= 0.0 && w <= 1.0)) throw Error("synth: drift weight outside [0, 1]");
  }
  if (!(sample_rate_hz > 0.0)) throw Error("synth: sample rate must be positive");
  if (!(duration_s > 0.0)) throw Error("synth: duration must be positive");
  const double n = duration_s * sample_rate_hz;
  if (std::abs(n - std::round(n)) > 1e-9) {
    throw Error("synth: duration x sample rate must be a whole number of samples");
  }
  if (n < 2) throw Error("synth: fewer than 2 samples");
  if (!(separability >= 0.0 && separability <= 1.0)) throw Error("synth: separability outside [0, 1]");
  if (!(noise_floor >= 0.0) || !(visual_noise >= 0.0) || !(scale_uv > 0.0)) {
    throw Error("synth: noise levels must be nonnegative and scale positive");
  }
  if (!(jitter >= 0.0 && jitter <= 0.15)) throw Error("synth: jitter outside [0, 0.15]");
  if (target_channel) ChannelSet::canonical14().require(*target_channel);
  if (target_band) band_index(*target_band);
}

std::string synth_concept_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%03zu", index);
  return buf;
}

std::array<std::pair<double, double>, kSynthBands> synth_band_ranges(double sample_rate_hz) {
  std::array<std::pair<double, double>, kSynthBands> out;
  const auto& bands = BandSpec::rhythms();
  for (std::size_t b = 0; b < kSynthBands; ++b) {
    const double lo = bands[b].low_hz, hi = std::min(bands[b].high_hz, 0.4 * sample_rate_hz);
    const double margin = 0.15 * (hi - lo);
    out[b] = {lo + margin, hi - margin};
  }
  return out;
}

ConceptFingerprint draw_fingerprint(const SynthConfig& config, Rng& rng) {
  const auto ranges = synth_band_ranges(config.sample_rate_hz);
  const std::size_t channels = ChannelSet::canonical14().size();
  ConceptFingerprint fp;
  fp.amplitude.resize(channels);
  fp.frequency.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t b = 0; b < kSynthBands; ++b) {
      fp.amplitude[c][b] = rng.uniform();
      fp.frequency[c][b] = rng.uniform(ranges[b].first, ranges[b].second);
    }
  }
  return fp;
}

std::vector<double> pink_noise(std::size_t n, Rng& rng) {
  // Kellet's seven-term filter; slope is -10 dB/decade from about 1e-3 fs up.
  constexpr std::size_t burn_in = 4096;
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < burn_in + n; ++i) {
    const double w = rng.normal();
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double y = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    if (i >= burn_in) out[i - burn_in] = y;
  }
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : out) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  for (double& v : out) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return out;
}

RawTrace synth_trace(const SynthConfig& config, std::size_t concept_index, int day) {
  config.validate();
  const std::size_t n = config.n_samples();
  const double fs = config.sample_rate_hz;
  const ChannelSet signal = ChannelSet::canonical14();
  const std::size_t n_signal = signal.size();

  Rng concept_rng(derive_seed(config.seed, kFingerprintStream, concept_index));
  const ConceptFingerprint base = draw_fingerprint(config, concept_rng);
  Rng day_rng(derive_seed(config.seed, kDayStream, trace_key(concept_index, day)));
  const ConceptFingerprint other = draw_fingerprint(config, day_rng);
  const double w = config.drift_weight(day);

  const std::optional<std::size_t> only_channel =
      config.target_channel ? std::optional(signal.require(*config.target_channel)) : std::nullopt;
  const std::optional<std::size_t> only_band =
      config.target_band ? std::optional(band_index(*config.target_band)) : std::nullopt;
  const auto ranges = synth_band_ranges(fs);

  Rng rng(derive_seed(config.seed, kTraceStream, trace_key(concept_index, day)));
  const std::vector<double> visual_left = pink_noise(n, rng);
  const std::vector<double> visual_right = pink_noise(n, rng);

  RawTrace t;
  t.concept_id = synth_concept_id(concept_index);
  t.day = day;
  t.sample_rate_hz = fs;
  t.channels = ChannelSet::canonical16();
  t.samples = Matrix<double>(n, t.channels.size());

  const double sep = config.separability;
  for (std::size_t c = 0; c < n_signal; ++c) {
    const bool left = occipital_reference(signal[c]) == "O1";
    const auto& visual = left ? visual_left : visual_right;
    const std::vector<double> pink = pink_noise(n, rng);
    std::array<double, kSynthBands> amp{}, freq{}, phase{};
    for (std::size_t b = 0; b < kSynthBands; ++b) {
      const bool carries = (!only_channel || *only_channel == c) && (!only_band || *only_band == b);
      amp[b] = carries ? w * base.amplitude[c][b] + (1.0 - w) * other.amplitude[c][b] : 0.0;
      const double width = ranges[b].second - ranges[b].first;
      freq[b] = w * base.frequency[c][b] + (1.0 - w) * other.frequency[c][b] +
                rng.uniform(-config.jitter, config.jitter) * width;
      phase[b] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const std::size_t col = t.channels.require(signal[c]);
    for (std::size_t i = 0; i < n; ++i) {
      const double time = static_cast<double>(i) / fs;
      double s = 0.0;
      for (std::size_t b = 0; b < kSynthBands; ++b) {
        if (amp[b] != 0.0) s += amp[b] * std::sin(2.0 * std::numbers::pi * freq[b] * time + phase[b]);
      }
      const double v = sep * s + (1.0 - sep) * pink[i] + config.noise_floor * rng.normal() +
                       config.visual_noise * visual[i];
      t.samples(i, col) = config.scale_uv * v;
    }
  }
  const std::size_t o1 = t.channels.require("O1"), o2 = t.channels.require("O2");
  for (std::size_t i = 0; i < n; ++i) {
    t.samples(i, o1) = config.scale_uv * (config.visual_noise * visual_left[i] + config.noise_floor * rng.normal());
    t.samples(i, o2) = config.scale_uv * (config.visual_noise * visual_right[i] + config.noise_floor * rng.normal());
  }
  return t;
}

Dataset gen_dataset(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  for (std::size_t i = 0; i < config.n_concepts; ++i) {
    for (int day : config.days) {
      RawTrace t = synth_trace(config, i, day);
      ds.manifest.entries.push_back(
          {t.concept_id + "_day" + std::to_string(day) + ".csv", t.concept_id, "synthetic", day});
      ds.traces.push_back(std::move(t));
    }
  }
  return ds;
}

Dataset gen_channel_localized(SynthConfig config, const std::string& target_channel) {
  config.target_channel = target_channel;
  return gen_dataset(config);
}

Dataset gen_band_localized(SynthConfig config, const std::string& target_band) {
  config.target_band = target_band;
  return gen_dataset(config);
}

}  // namespace memdecode
