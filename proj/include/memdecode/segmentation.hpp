// SPDX-License-Identifier: Apache-2.0
//
// Sliding-window segmentation with trend and anomaly quality filters and
// per-segment normalization.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memdecode/preprocess.hpp"

namespace memdecode {

struct Segment {
  std::string concept_id;
  int day = 0;
  std::string trace_id;
  std::size_t offset = 0;  // start sample in the clean trace
  Matrix<float> data;      // [window x channels]
};

struct SegmentProvenance {
  std::size_t raw = 0;
  std::size_t after_trend = 0;
  std::size_t after_outlier = 0;
};

/// Segments of one trace.
struct SegmentSet {
  std::vector<Segment> segments;
  SegmentProvenance provenance;

  std::size_t size() const { return segments.size(); }
};

struct SegmentConfig {
  std::size_t window = 100;
  std::size_t stride = 10;
  double trend_frac = 0.05;
  double outlier_frac = 0.05;
  std::size_t iforest_trees = 100;
  std::size_t iforest_subsample = 256;
  std::uint64_t iforest_seed = 0;
};

std::string trace_id_of(const std::string& concept_id, int day);

SegmentSet slide_windows(const CleanTrace& clean, std::size_t window = 100, std::size_t stride = 10);

/// max over channels of |mean(second half) - mean(first half)|; for odd
/// windows the middle sample belongs to neither half.
double trend_score(const Segment& segment);

/// floor(frac * n) + rounding slack; the number of segments a drop removes.
std::size_t drop_count(double frac, std::size_t n);

/// Drops the drop_count() highest-trend segments (lower offset first on ties).
SegmentSet drop_trending(const SegmentSet& set, double frac = 0.05);

/// Per-channel population standard deviation of a segment.
std::vector<double> channel_stddevs(const Segment& segment);

/// Drops the drop_count() segments the isolation forest scores most anomalous,
/// using per-channel standard deviations as features.
SegmentSet drop_anomalous(const SegmentSet& set, double frac = 0.05, std::size_t n_trees = 100,
                          std::size_t subsample = 256, std::uint64_t seed = 0);

Segment zscore_segment(const Segment& segment);

/// slide -> drop_trending -> drop_anomalous -> zscore_segment.
SegmentSet segment_pipeline(const CleanTrace& clean, const SegmentConfig& config = {});

}  // namespace memdecode
