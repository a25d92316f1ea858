// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-day recordings with controllable concept separability.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memdecode/dataset.hpp"
#include "memdecode/rng.hpp"

namespace memdecode {

inline constexpr std::size_t kSynthBands = 5;

/// Amplitude and base frequency per (signal channel, band).
struct ConceptFingerprint {
  std::vector<std::array<double, kSynthBands>> amplitude;  // per channel, >= 0
  std::vector<std::array<double, kSynthBands>> frequency;  // Hz, inside each band
};

struct SynthConfig {
  std::size_t n_concepts = 20;
  std::vector<int> days = {0, 1, 3};
  double duration_s = 75.0;
  double sample_rate_hz = 125.0;
  double separability = 0.8;
  double noise_floor = 0.1;
  /// Shared occipital noise mixed into every ipsilateral channel.
  double visual_noise = 1.0;
  /// Overall output scale in microvolts.
  double scale_uv = 20.0;
  /// Per-trace frequency jitter, as a fraction of the band width.
  double jitter = 0.05;
  /// Fingerprint weight per day (day 0, day 1, day 3); the remainder is a
  /// day-specific random fingerprint.
  double drift_day0 = 1.0;
  double drift_day1 = 0.85;
  double drift_day3 = 0.7;
  /// Concept information only on this channel when set.
  std::optional<std::string> target_channel;
  /// Concept information only in this band (delta..gamma) when set.
  std::optional<std::string> target_band;
  std::uint64_t seed = 0;

  std::size_t n_samples() const;
  double drift_weight(int day) const;
  /// Throws Error on invalid settings.
  void validate() const;
};

std::string synth_concept_id(std::size_t index);

/// Frequency ranges used for the synthetic rhythms (gamma capped below 0.4 fs).
std::array<std::pair<double, double>, kSynthBands> synth_band_ranges(double sample_rate_hz);

ConceptFingerprint draw_fingerprint(const SynthConfig& config, Rng& rng);

/// Unit-variance 1/f noise from a filtered white-noise source.
std::vector<double> pink_noise(std::size_t n, Rng& rng);

/// One 16-channel trace of `concept`'s fingerprint on `day`.
RawTrace synth_trace(const SynthConfig& config, std::size_t concept_index, int day);

/// Every (concept, day) trace with its manifest (files named <concept>_day<d>.csv).
Dataset gen_dataset(const SynthConfig& config);
Dataset gen_channel_localized(SynthConfig config, const std::string& target_channel);
Dataset gen_band_localized(SynthConfig config, const std::string& target_band);

}  // namespace memdecode
