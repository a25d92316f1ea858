// SPDX-License-Identifier: Apache-2.0
//
// Trace preprocessing chain: clip -> occipital re-reference -> band-pass ->
// z-score -> trim, plus channel restriction for ablation studies.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memdecode/dataset.hpp"

namespace memdecode {

struct BandSpec {
  std::string name;
  double low_hz = 1.0;
  double high_hz = 100.0;

  /// Upper cutoff after clamping to 0.45 * sample rate.
  double effective_high(double sample_rate_hz) const;

  static BandSpec broadband() { return {"broadband", 1.0, 100.0}; }
  /// delta, theta, alpha, beta, gamma or broadband. Throws on unknown names.
  static BandSpec by_name(std::string_view name);
  /// The five physiological bands in ascending order.
  static const std::vector<BandSpec>& rhythms();

  bool operator==(const BandSpec&) const = default;
};

inline constexpr double kNyquistClampFraction = 0.45;

struct CleanTrace {
  std::string concept_id;
  int day = 0;
  double sample_rate_hz = 125.0;
  ChannelSet channels;
  Matrix<double> samples;
  std::vector<std::string> steps_applied;

  std::size_t n_samples() const { return samples.rows(); }
};

struct PreprocessConfig {
  double clip_lo = 0.005;
  double clip_hi = 0.995;
  BandSpec band = BandSpec::broadband();
  std::size_t taps = 501;
  double trim_seconds = 4.0;
  /// Applied after the five steps when set.
  std::optional<ChannelSet> subset;
};

/// Linear-interpolation quantile over the pooled values of all channels.
std::vector<double> pooled_quantiles(const Matrix<double>& samples, std::span<const double> qs);

RawTrace clip_quantiles(const RawTrace& trace, double lo = 0.005, double hi = 0.995);
/// Subtracts the ipsilateral occipital channel and drops O1/O2.
RawTrace rereference_occipital(const RawTrace& trace);

/// Hamming-windowed difference of two unit-DC sinc low-passes.
std::vector<double> design_fir_bandpass(double low_hz, double high_hz, double sample_rate_hz,
                                        std::size_t n_taps = 501);
/// Group-delay compensated, same-length band-pass filtering of every channel.
RawTrace bandpass_fir(const RawTrace& trace, const BandSpec& band, std::size_t n_taps = 501);
/// Per-channel (x - mean) / std with population std; near-constant channels become zeros.
RawTrace zscore_channels(const RawTrace& trace);
RawTrace trim_edges(const RawTrace& trace, double seconds = 4.0);

inline const std::vector<std::string>& canonical_steps() {
  static const std::vector<std::string> steps = {"clip", "rereference", "bandpass", "zscore",
                                                 "trim"};
  return steps;
}

CleanTrace preprocess(const RawTrace& raw, const PreprocessConfig& config = {});
/// Keeps the listed channels in the trace's own order.
CleanTrace restrict_channels(const CleanTrace& clean, const ChannelSet& subset);

/// In-place z-score of column-strided data; shared with segment normalization.
void zscore_columns(std::size_t rows, std::size_t cols, double* data);

}  // namespace memdecode
