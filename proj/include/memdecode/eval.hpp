// SPDX-License-Identifier: Apache-2.0
//
// Trial protocol, accuracy summaries with bootstrap intervals, per-concept
// statistics and channel / band ablations.
#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "memdecode/classify.hpp"
#include "memdecode/dataset.hpp"
#include "memdecode/encoder.hpp"
#include "memdecode/preprocess.hpp"
#include "memdecode/segmentation.hpp"

namespace memdecode {

/// Preprocessed and segmented traces, shared read-only by all trials.
struct PreparedTrace {
  std::string concept_id;
  int day = 0;
  SegmentSet set;
};

struct PreparedDataset {
  ChannelSet channels;
  std::vector<PreparedTrace> traces;

  const PreparedTrace* find(const std::string& concept_id, int day) const;
  std::vector<std::string> concepts() const;
  std::size_t segment_count() const;
};

PreparedDataset prepare_dataset(const Dataset& dataset, const PreprocessConfig& preprocess = {},
                                const SegmentConfig& segment = {});

enum class Backend {
  encoder_knn,     // trained encoder + KNN
  oracle,          // every segment votes for its true concept
  uniform_random,  // every segment votes for a uniformly random test concept
};

std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

struct EvalConfig {
  PreprocessConfig preprocess;
  SegmentConfig segment;
  TrainConfig train;
  Backend backend = Backend::encoder_knn;
  std::size_t test_size = 25;
  int reference_day = 0;
  int eval_day = 1;
  std::size_t knn_k = 25;
  bool knn_normalize = false;
  std::size_t n_trials = 25;
  std::size_t min_band_trials = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  /// Zero means "all" for the four limits below.
  std::size_t train_concepts = 0;
  std::size_t train_segments = 0;  // per training concept
  std::size_t reference_budget = 0;  // earliest segments per reference trace
  std::size_t query_budget = 0;      // earliest segments per evaluated trace
  std::size_t bootstrap_resamples = 10000;
  double ci_level = 0.95;
};

struct ConceptOutcome {
  bool trace_correct = false;  // top-1
  double segment_accuracy = 0.0;
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  ConceptSplit split;
  int eval_day = 1;
  double top1 = 0.0, top2 = 0.0, top3 = 0.0;
  double segment_accuracy = 0.0;
  std::map<std::string, ConceptOutcome> per_concept;
  /// Mean pairwise cosine similarity of evaluated embeddings within one
  /// concept and across concepts (encoder backend only, NaN otherwise).
  double within_cosine = std::numeric_limits<double>::quiet_NaN();
  double between_cosine = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();

  double average_accuracy() const { return (top1 + top2 + top3) / 3.0; }
};

/// Trial seed = config.seed + trial_index. Evaluates each of `eval_days` with
/// the same split and trained encoder.
std::vector<TrialResult> run_trial_days(const PreparedDataset& data, const EvalConfig& config,
                                        std::size_t trial_index, const std::vector<int>& eval_days);
TrialResult run_trial(const PreparedDataset& data, const EvalConfig& config, std::size_t trial_index);

struct Interval {
  double low = 0.0, high = 0.0;
};

/// Percentile bootstrap of the mean. Throws on empty input.
Interval bootstrap_ci(const std::vector<double>& values, std::size_t n_resamples = 10000,
                      double level = 0.95, std::uint64_t seed = 0);

struct MetricSummary {
  double mean = 0.0;
  Interval ci;
};

struct AccuracySummary {
  std::size_t n_trials = 0;
  double level = 0.95;
  MetricSummary top1, top2, top3, segment, average;
};

AccuracySummary summarize(const std::vector<TrialResult>& trials, std::size_t n_resamples = 10000,
                          double level = 0.95, std::uint64_t seed = 0);

struct TrialsReport {
  AccuracySummary summary;
  std::vector<TrialResult> trials;  // by trial index
};

/// Runs n_trials (config.n_trials when zero) on config.jobs threads; the
/// output does not depend on the thread count.
TrialsReport run_trials(const PreparedDataset& data, const EvalConfig& config, std::size_t n_trials = 0);

struct ConceptAccuracy {
  double mean = 0.0;
  Interval ci;
  std::size_t appearances = 0;
  bool high_variance() const { return ci.high - ci.low > 0.5; }
};

std::map<std::string, ConceptAccuracy> per_concept_accuracy(const std::vector<TrialResult>& trials,
                                                            std::size_t n_resamples = 10000,
                                                            double level = 0.95, std::uint64_t seed = 0);
/// Counts of per-concept mean accuracies in `bins` equal-width bins over [0, 1].
std::vector<std::size_t> accuracy_histogram(const std::map<std::string, ConceptAccuracy>& acc,
                                            std::size_t bins = 10);

struct AblationVariant {
  std::string name;
  std::optional<ChannelSet> channels;
  std::optional<BandSpec> band;
};

struct VariantResult {
  AblationVariant variant;
  TrialsReport report;
};

std::vector<AblationVariant> single_channel_variants(const ChannelSet& channels = ChannelSet::canonical14());
std::vector<AblationVariant> band_variants(const std::vector<BandSpec>& bands = BandSpec::rhythms());
std::vector<AblationVariant> hemisphere_variants();

/// Re-prepares the dataset under each restriction and runs trials; band
/// variants run at least config.min_band_trials trials.
std::vector<VariantResult> ablate(const Dataset& dataset, const EvalConfig& config,
                                  const std::vector<AblationVariant>& variants);

void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials);
std::string summary_json(const AccuracySummary& summary, int indent = 2);
std::string concept_accuracy_json(const std::map<std::string, ConceptAccuracy>& acc, int indent = 2);

/// Writes `concept,day,offset,e0..e31` rows for every prepared segment.
void export_embeddings(std::ostream& out, const PreparedDataset& data, const EncoderModel& model);

}  // namespace memdecode
