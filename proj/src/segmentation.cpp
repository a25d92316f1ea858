// SPDX-License-Identifier: Apache-2.0

#include "memdecode/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memdecode/iforest.hpp"

namespace memdecode {

std::string trace_id_of(const std::string& concept_id, int day) {
  return concept_id + "/day" + std::to_string(day);
}

SegmentSet slide_windows(const CleanTrace& clean, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw Error("segment window and stride must be positive");
  const std::size_t n = clean.n_samples();
  if (window > n) {
    throw Error("trace of " + std::to_string(n) + " samples is shorter than the " +
                std::to_string(window) + "-sample window");
  }
  const std::size_t cols = clean.samples.cols();
  const std::string trace_id = trace_id_of(clean.concept_id, clean.day);
  SegmentSet set;
  const std::size_t count = (n - window) / stride + 1;
  set.segments.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Segment s;
    s.concept_id = clean.concept_id;
    s.day = clean.day;
    s.trace_id = trace_id;
    s.offset = k * stride;
    s.data = Matrix<float>(window, cols);
    const double* src = clean.samples.data() + s.offset * cols;
    std::transform(src, src + window * cols, s.data.data(),
                   [](double v) { return static_cast<float>(v); });
    set.segments.push_back(std::move(s));
  }
  set.provenance = {count, count, count};
  return set;
}

double trend_score(const Segment& segment) {
  const std::size_t w = segment.data.rows();
  if (w < 2) throw Error("trend score needs a window of at least 2 samples");
  const std::size_t half = w / 2;
  double best = 0.0;
  for (std::size_t c = 0; c < segment.data.cols(); ++c) {
    double first = 0.0, second = 0.0;
    for (std::size_t r = 0; r < half; ++r) first += segment.data(r, c);
    for (std::size_t r = w - half; r < w; ++r) second += segment.data(r, c);
    best = std::max(best, std::abs(second - first) / static_cast<double>(half));
  }
  return best;
}

std::size_t drop_count(double frac, std::size_t n) {
  if (!(frac >= 0.0 && frac < 1.0)) throw Error("drop fraction must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

namespace {

// Keeps all but the `drop` highest scores; ties drop the lower offset first.
SegmentSet drop_highest(const SegmentSet& set, const std::vector<double>& scores, std::size_t drop) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return set.segments[a].offset < set.segments[b].offset;
  });
  std::vector<bool> dropped(set.size(), false);
  for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = true;
  SegmentSet out;
  out.provenance = set.provenance;
  out.segments.reserve(set.size() - drop);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!dropped[i]) out.segments.push_back(set.segments[i]);
  }
  return out;
}

}  // namespace

SegmentSet drop_trending(const SegmentSet& set, double frac) {
  const std::size_t drop = drop_count(frac, set.size());
  std::vector<double> scores(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) scores[i] = trend_score(set.segments[i]);
  SegmentSet out = drop_highest(set, scores, drop);
  out.provenance.after_trend = out.size();
  out.provenance.after_outlier = out.size();
  return out;
}

std::vector<double> channel_stddevs(const Segment& segment) {
  const std::size_t w = segment.data.rows();
  std::vector<double> sd(segment.data.cols());
  for (std::size_t c = 0; c < segment.data.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < w; ++r) mean += segment.data(r, c);
    mean /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t r = 0; r < w; ++r) {
      const double d = segment.data(r, c) - mean;
      var += d * d;
    }
    sd[c] = std::sqrt(var / static_cast<double>(w));
  }
  return sd;
}

SegmentSet drop_anomalous(const SegmentSet& set, double frac, std::size_t n_trees,
                          std::size_t subsample, std::uint64_t seed) {
  const std::size_t drop = drop_count(frac, set.size());
  if (drop == 0) {
    SegmentSet out = set;
    out.provenance.after_outlier = out.size();
    return out;
  }
  const std::size_t cols = set.segments.front().data.cols();
  Matrix<double> features(set.size(), cols);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto sd = channel_stddevs(set.segments[i]);
    std::copy(sd.begin(), sd.end(), features.row(i).begin());
  }
  const auto scores = iforest_fit_score(features, n_trees, subsample, seed);
  SegmentSet out = drop_highest(set, scores, drop);
  out.provenance.after_outlier = out.size();
  return out;
}

Segment zscore_segment(const Segment& segment) {
  Segment out = segment;
  const std::size_t rows = segment.data.rows(), cols = segment.data.cols();
  std::vector<double> tmp(segment.data.values().begin(), segment.data.values().end());
  zscore_columns(rows, cols, tmp.data());
  std::transform(tmp.begin(), tmp.end(), out.data.data(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

SegmentSet segment_pipeline(const CleanTrace& clean, const SegmentConfig& config) {
  SegmentSet set = slide_windows(clean, config.window, config.stride);
  set = drop_trending(set, config.trend_frac);
  set = drop_anomalous(set, config.outlier_frac, config.iforest_trees, config.iforest_subsample,
                       config.iforest_seed);
  for (auto& s : set.segments) s = zscore_segment(s);
  return set;
}

}  // namespace memdecode
