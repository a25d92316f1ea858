// SPDX-License-Identifier: Apache-2.0

#include "memdecode/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "memdecode/rng.hpp"

namespace memdecode {

namespace {

constexpr std::uint64_t kSplitStream = 10;
constexpr std::uint64_t kConceptLimitStream = 11;
constexpr std::uint64_t kSegmentLimitStream = 12;
constexpr std::uint64_t kTrainStream = 13;
constexpr std::uint64_t kRandomBackendStream = 14;
constexpr std::uint64_t kBootstrapStream = 15;

std::vector<const Matrix<float>*> first_segments(const PreparedTrace& t, std::size_t budget) {
  const std::size_t n = budget == 0 ? t.set.size() : std::min(budget, t.set.size());
  std::vector<const Matrix<float>*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&t.set.segments[i].data);
  return out;
}

const PreparedTrace& require_trace(const PreparedDataset& data, const std::string& concept_id, int day) {
  const PreparedTrace* t = data.find(concept_id, day);
  if (!t) {
    throw Error("missing day " + std::to_string(day) + " trace for test concept " + concept_id);
  }
  if (t->set.segments.empty()) throw Error("trace " + trace_id_of(concept_id, day) + " has no segments");
  return *t;
}

ConceptDistribution one_hot(const std::vector<std::string>& classes, std::size_t index) {
  ConceptDistribution d;
  d.concepts = classes;
  d.probs.assign(classes.size(), 0.0);
  d.probs[index] = 1.0;
  return d;
}

// Mean pairwise cosine similarity within and between groups of unit rows,
// from the per-group sums of unit vectors.
std::pair<double, double> cosine_stats(const std::vector<Matrix<float>>& groups) {
  std::vector<std::vector<double>> sums;
  std::vector<double> counts;
  for (const auto& g : groups) {
    std::vector<double> s(g.cols(), 0.0);
    double n = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double ss = 0.0;
      for (float v : g.row(r)) ss += static_cast<double>(v) * v;
      if (ss <= 0.0) continue;
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t c = 0; c < g.cols(); ++c) s[c] += g(r, c) * inv;
      n += 1.0;
    }
    sums.push_back(std::move(s));
    counts.push_back(n);
  }
  const auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d;
  };
  double within = 0.0, within_pairs = 0.0, between = 0.0, between_pairs = 0.0;
  for (std::size_t a = 0; a < sums.size(); ++a) {
    if (counts[a] >= 2) {
      within += dot(sums[a], sums[a]) - counts[a];
      within_pairs += counts[a] * (counts[a] - 1);
    }
    for (std::size_t b = a + 1; b < sums.size(); ++b) {
      between += dot(sums[a], sums[b]);
      between_pairs += counts[a] * counts[b];
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {within_pairs > 0 ? within / within_pairs : nan, between_pairs > 0 ? between / between_pairs : nan};
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

MetricSummary metric(const std::vector<double>& values, std::size_t resamples, double level, std::uint64_t seed) {
  MetricSummary m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  m.ci = bootstrap_ci(values, resamples, level, seed);
  return m;
}

nlohmann::ordered_json metric_json(const MetricSummary& m) {
  return {{"mean", m.mean}, {"ci_low", m.ci.low}, {"ci_high", m.ci.high}};
}

}  // namespace

const PreparedTrace* PreparedDataset::find(const std::string& concept_id, int day) const {
  for (const auto& t : traces) {
    if (t.concept_id == concept_id && t.day == day) return &t;
  }
  return nullptr;
}

std::vector<std::string> PreparedDataset::concepts() const {
  std::set<std::string> s;
  for (const auto& t : traces) s.insert(t.concept_id);
  return {s.begin(), s.end()};
}

std::size_t PreparedDataset::segment_count() const {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.set.size();
  return n;
}

PreparedDataset prepare_dataset(const Dataset& dataset, const PreprocessConfig& preprocess,
                                const SegmentConfig& segment) {
  PreparedDataset out;
  out.traces.reserve(dataset.traces.size());
  for (const auto& raw : dataset.traces) {
    const CleanTrace clean = memdecode::preprocess(raw, preprocess);
    if (out.traces.empty()) {
      out.channels = clean.channels;
    } else if (!(clean.channels == out.channels)) {
      throw Error("traces disagree on channels after preprocessing");
    }
    out.traces.push_back({raw.concept_id, raw.day, segment_pipeline(clean, segment)});
  }
  return out;
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::encoder_knn: return "encoder";
    case Backend::oracle: return "oracle";
    case Backend::uniform_random: return "random";
  }
  return "unknown";
}

Backend parse_backend(const std::string& name) {
  for (Backend b : {Backend::encoder_knn, Backend::oracle, Backend::uniform_random}) {
    if (backend_name(b) == name) return b;
  }
  throw Error("unknown backend '" + name + "' (expected encoder, oracle or random)");
}

std::vector<TrialResult> run_trial_days(const PreparedDataset& data, const EvalConfig& config,
                                        std::size_t trial_index, const std::vector<int>& eval_days) {
  if (eval_days.empty()) throw Error("no evaluation day given");
  const std::uint64_t seed = config.seed + trial_index;
  const ConceptSplit split = split_concepts(data.concepts(), config.test_size, derive_seed(seed, kSplitStream));
  const std::vector<std::string>& classes = split.test;  // sorted

  std::vector<std::string> train_concepts = split.train;
  if (config.train_concepts > 0 && config.train_concepts < train_concepts.size()) {
    Rng rng(derive_seed(seed, kConceptLimitStream));
    rng.shuffle(train_concepts);
    train_concepts.resize(config.train_concepts);
    std::sort(train_concepts.begin(), train_concepts.end());
  }

  std::vector<TrialResult> results;
  for (int day : eval_days) {
    TrialResult r;
    r.trial = trial_index;
    r.seed = seed;
    r.split = split;
    r.eval_day = day;
    results.push_back(std::move(r));
  }

  // Per day, per test concept: the segment distributions of the evaluated trace.
  std::vector<std::vector<std::vector<ConceptDistribution>>> votes(eval_days.size(),
                                                                   std::vector<std::vector<ConceptDistribution>>(classes.size()));

  if (config.backend == Backend::encoder_knn) {
    TrainingPool pool;
    for (std::size_t ci = 0; ci < train_concepts.size(); ++ci) {
      const std::string& concept_id = train_concepts[ci];
      std::vector<const Matrix<float>*> items;
      for (const auto& t : data.traces) {
        if (t.concept_id != concept_id) continue;
        for (const auto& s : t.set.segments) items.push_back(&s.data);
      }
      if (config.train_segments > 0 && config.train_segments < items.size()) {
        Rng rng(derive_seed(seed, kSegmentLimitStream, ci));
        rng.shuffle(items);
        items.resize(config.train_segments);
      }
      if (items.empty()) continue;
      pool.concepts.push_back(concept_id);
      pool.items.push_back(std::move(items));
    }
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, kTrainStream);
    TrainResult trained = train(pool, tc);

    std::vector<const Matrix<float>*> refs;
    std::vector<std::string> ref_labels;
    for (const auto& concept_id : classes) {
      const auto segs = first_segments(require_trace(data, concept_id, config.reference_day), config.reference_budget);
      refs.insert(refs.end(), segs.begin(), segs.end());
      ref_labels.insert(ref_labels.end(), segs.size(), concept_id);
    }
    const KnnModel knn = knn_fit(encode_batch(trained.model, refs), ref_labels, config.knn_k, config.knn_normalize);

    for (std::size_t d = 0; d < eval_days.size(); ++d) {
      std::vector<Matrix<float>> groups;
      for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const auto segs = first_segments(require_trace(data, classes[ci], eval_days[d]), config.query_budget);
        groups.push_back(encode_batch(trained.model, segs));
        votes[d][ci] = knn_predict_proba(knn, groups.back());
      }
      std::tie(results[d].within_cosine, results[d].between_cosine) = cosine_stats(groups);
      results[d].final_loss = trained.loss_curve.empty() ? results[d].final_loss : trained.loss_curve.back();
    }
  } else {
    Rng rng(derive_seed(seed, kRandomBackendStream));
    for (std::size_t d = 0; d < eval_days.size(); ++d) {
      for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const auto segs = first_segments(require_trace(data, classes[ci], eval_days[d]), config.query_budget);
        for (std::size_t i = 0; i < segs.size(); ++i) {
          const std::size_t vote = config.backend == Backend::oracle ? ci : rng.below(classes.size());
          votes[d][ci].push_back(one_hot(classes, vote));
        }
      }
    }
  }

  for (std::size_t d = 0; d < eval_days.size(); ++d) {
    TrialResult& r = results[d];
    std::size_t hits1 = 0, hits2 = 0, hits3 = 0, seg_hits = 0, seg_total = 0;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const auto& segs = votes[d][ci];
      std::size_t correct = 0;
      for (const auto& s : segs) correct += s.argmax() == ci;
      const ConceptDistribution trace = classify_trace(segs);
      const auto ranked = top_k(trace, 3);
      const auto rank_of = std::find(ranked.begin(), ranked.end(), classes[ci]) - ranked.begin();
      hits1 += rank_of < 1;
      hits2 += rank_of < 2;
      hits3 += rank_of < 3;
      seg_hits += correct;
      seg_total += segs.size();
      r.per_concept[classes[ci]] = {rank_of < 1, static_cast<double>(correct) / static_cast<double>(segs.size())};
    }
    const double n = static_cast<double>(classes.size());
    r.top1 = hits1 / n;
    r.top2 = hits2 / n;
    r.top3 = hits3 / n;
    r.segment_accuracy = static_cast<double>(seg_hits) / static_cast<double>(seg_total);
  }
  return results;
}

TrialResult run_trial(const PreparedDataset& data, const EvalConfig& config, std::size_t trial_index) {
  return run_trial_days(data, config, trial_index, {config.eval_day}).front();
}

Interval bootstrap_ci(const std::vector<double>& values, std::size_t n_resamples, double level, std::uint64_t seed) {
  if (values.empty()) throw Error("bootstrap of an empty sample");
  if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap level must lie in (0, 1)");
  if (n_resamples == 0) throw Error("bootstrap needs at least one resample");
  const std::size_t n = values.size();
  Rng rng(derive_seed(seed, kBootstrapStream));
  std::vector<double> means(n_resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(means, tail), quantile_sorted(means, 1.0 - tail)};
}

AccuracySummary summarize(const std::vector<TrialResult>& trials, std::size_t n_resamples, double level,
                          std::uint64_t seed) {
  if (trials.empty()) throw Error("no trials to summarize");
  std::vector<double> t1, t2, t3, seg, avg;
  for (const auto& t : trials) {
    t1.push_back(t.top1);
    t2.push_back(t.top2);
    t3.push_back(t.top3);
    seg.push_back(t.segment_accuracy);
    avg.push_back(t.average_accuracy());
  }
  AccuracySummary s;
  s.n_trials = trials.size();
  s.level = level;
  s.top1 = metric(t1, n_resamples, level, seed);
  s.top2 = metric(t2, n_resamples, level, seed + 1);
  s.top3 = metric(t3, n_resamples, level, seed + 2);
  s.segment = metric(seg, n_resamples, level, seed + 3);
  s.average = metric(avg, n_resamples, level, seed + 4);
  return s;
}

TrialsReport run_trials(const PreparedDataset& data, const EvalConfig& config, std::size_t n_trials) {
  if (n_trials == 0) n_trials = config.n_trials;
  if (n_trials < 1) throw Error("need at least one trial");
  TrialsReport report;
  report.trials.resize(n_trials);
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, n_trials));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_trials) return;
      try {
        report.trials[i] = run_trial(data, config, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_trials);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  report.summary = summarize(report.trials, config.bootstrap_resamples, config.ci_level, config.seed);
  return report;
}

std::map<std::string, ConceptAccuracy> per_concept_accuracy(const std::vector<TrialResult>& trials,
                                                            std::size_t n_resamples, double level,
                                                            std::uint64_t seed) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& t : trials) {
    for (const auto& [concept_id, outcome] : t.per_concept) values[concept_id].push_back(outcome.segment_accuracy);
  }
  std::map<std::string, ConceptAccuracy> out;
  std::uint64_t i = 0;
  for (const auto& [concept_id, v] : values) {
    ConceptAccuracy a;
    a.appearances = v.size();
    a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    a.ci = bootstrap_ci(v, n_resamples, level, seed + i++);
    out[concept_id] = a;
  }
  return out;
}

std::vector<std::size_t> accuracy_histogram(const std::map<std::string, ConceptAccuracy>& acc, std::size_t bins) {
  if (bins == 0) throw Error("histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (const auto& [concept_id, a] : acc) {
    const auto b = static_cast<std::size_t>(std::clamp(a.mean, 0.0, 1.0) * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  return counts;
}

std::vector<AblationVariant> single_channel_variants(const ChannelSet& channels) {
  std::vector<AblationVariant> out;
  for (const auto& label : channels.labels()) out.push_back({label, ChannelSet({label}), std::nullopt});
  return out;
}

std::vector<AblationVariant> band_variants(const std::vector<BandSpec>& bands) {
  std::vector<AblationVariant> out;
  for (const auto& b : bands) out.push_back({b.name, std::nullopt, b});
  return out;
}

std::vector<AblationVariant> hemisphere_variants() {
  return {{"left", ChannelSet::left_hemisphere(), std::nullopt},
          {"right", ChannelSet::right_hemisphere(), std::nullopt}};
}

std::vector<VariantResult> ablate(const Dataset& dataset, const EvalConfig& config,
                                  const std::vector<AblationVariant>& variants) {
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    EvalConfig cfg = config;
    if (v.channels) {
      for (const auto& label : v.channels->labels()) {
        if (!ChannelSet::canonical14().contains(label)) {
          throw Error("ablation channel " + label + " is not a re-referenced channel");
        }
      }
      cfg.preprocess.subset = v.channels;
    }
    std::size_t trials = config.n_trials;
    if (v.band) {
      cfg.preprocess.band = *v.band;
      trials = std::max(trials, config.min_band_trials);
    }
    const PreparedDataset data = prepare_dataset(dataset, cfg.preprocess, cfg.segment);
    out.push_back({v, run_trials(data, cfg, trials)});
  }
  return out;
}

void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials) {
  out << "trial,seed,top1,top2,top3,segment_acc\n";
  out << std::setprecision(17);
  for (const auto& t : trials) {
    out << t.trial << ',' << t.seed << ',' << t.top1 << ',' << t.top2 << ',' << t.top3 << ','
        << t.segment_accuracy << '\n';
  }
}

std::string summary_json(const AccuracySummary& s, int indent) {
  nlohmann::ordered_json j;
  j["n_trials"] = s.n_trials;
  j["level"] = s.level;
  j["top1"] = metric_json(s.top1);
  j["top2"] = metric_json(s.top2);
  j["top3"] = metric_json(s.top3);
  j["segment_accuracy"] = metric_json(s.segment);
  j["average_top123"] = metric_json(s.average);
  return j.dump(indent);
}

std::string concept_accuracy_json(const std::map<std::string, ConceptAccuracy>& acc, int indent) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [concept_id, a] : acc) {
    j[concept_id] = {{"mean", a.mean},
                     {"ci_low", a.ci.low},
                     {"ci_high", a.ci.high},
                     {"appearances", a.appearances},
                     {"high_variance", a.high_variance()}};
  }
  return j.dump(indent);
}

void export_embeddings(std::ostream& out, const PreparedDataset& data, const EncoderModel& model) {
  out << "concept,day,offset";
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) out << ",e" << i;
  out << '\n' << std::setprecision(9);
  for (const auto& t : data.traces) {
    const Matrix<float> e = encode_batch(model, t.set.segments);
    for (std::size_t r = 0; r < e.rows(); ++r) {
      out << t.concept_id << ',' << t.day << ',' << t.set.segments[r].offset;
      for (float v : e.row(r)) out << ',' << v;
      out << '\n';
    }
  }
}

}  // namespace memdecode
