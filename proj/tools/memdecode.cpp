// SPDX-License-Identifier: Apache-2.0
//
// memdecode: command-line driver for the decoding pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "memdecode/config.hpp"
#include "memdecode/gradcheck.hpp"
#include "memdecode/retrieval.hpp"

namespace fs = std::filesystem;
using namespace memdecode;
using ojson = nlohmann::ordered_json;

namespace {

/// Options every subcommand accepts.
struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  /// Dedicated flags, applied after --set as key overrides.
  std::vector<std::pair<std::string, std::function<std::optional<std::string>()>>> flags;

  /// Bad keys or values are usage errors.
  RunConfig build() const {
    try {
      return build_unchecked();
    } catch (const Error& e) {
      throw CLI::ValidationError("config", e.what());
    }
  }

  RunConfig build_unchecked() const {
    RunConfig cfg;
    if (const char* env = std::getenv("MEMDECODE_CONFIG"); env && *env) cfg.load_file(env);
    for (const auto& f : config_files) cfg.load_file(f);
    for (const auto& s : sets) cfg.set_assignment(s);
    for (const auto& [key, get] : flags) {
      if (auto v = get()) cfg.set(key, *v);
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    return cfg;
  }
};

template <typename T>
void flag(CLI::App* app, Common& c, const std::string& name, const std::string& key, std::optional<T>& slot,
          const std::string& help) {
  app->add_option(name, slot, help + " (sets " + key + ")");
  c.flags.emplace_back(key, [&slot]() -> std::optional<std::string> {
    if (!slot) return std::nullopt;
    if constexpr (std::is_same_v<T, std::string>) {
      return *slot;
    } else {
      std::ostringstream s;
      s << std::setprecision(17) << *slot;
      return s.str();
    }
  });
}

void add_common(CLI::App* app, Common& c, bool parallel) {
  app->add_option("--config", c.config_files, "key=value config file (repeatable)")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override one key: --set key=value (repeatable)");
  app->add_option("--seed", c.seed, "run seed (sets seed)");
  if (parallel) app->add_option("--jobs", c.jobs, "parallel trials; results do not depend on it")->check(CLI::PositiveNumber);
  app->footer(config_help());
}

/// Either a dataset directory or an in-memory synthetic dataset.
struct DataSource {
  std::string dir;
  bool synthetic = false;

  void add(CLI::App* app) {
    auto* d = app->add_option("--data", dir, "dataset directory or manifest");
    auto* s = app->add_flag("--synthetic", synthetic, "generate the dataset in memory from the synth.* keys");
    d->excludes(s);
  }

  Dataset load(const RunConfig& cfg) const {
    if (synthetic) return gen_dataset(cfg.synth());
    if (dir.empty()) throw CLI::RequiredError("--data or --synthetic");
    return load_dataset(dir, cfg.sample_rate_hz());
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

CleanTrace clean_from_file(const std::string& path, const RunConfig& cfg) {
  RawTrace raw = load_trace(path, ChannelSet::canonical16(), cfg.sample_rate_hz());
  raw.concept_id = fs::path(path).stem().string();
  return preprocess(raw, cfg.preprocess());
}

ojson summary_object(const AccuracySummary& s) { return ojson::parse(summary_json(s)); }

ojson report_object(const TrialsReport& report) {
  ojson j = summary_object(report.summary);
  double within = 0.0, between = 0.0;
  std::size_t n = 0;
  for (const auto& t : report.trials) {
    if (std::isnan(t.within_cosine)) continue;
    within += t.within_cosine;
    between += t.between_cosine;
    ++n;
  }
  if (n > 0) {
    j["within_cosine"] = within / static_cast<double>(n);
    j["between_cosine"] = between / static_cast<double>(n);
  }
  return j;
}

std::shared_ptr<const EncoderModel> load_model(const std::string& path) {
  return std::make_shared<const EncoderModel>(load_encoder(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memdecode: decode recalled concepts from EEG traces with a contrastive encoder"};
  app.require_subcommand(1);
  app.footer("Run `memdecode <command> --help` for the options and config keys of a command.");

  // synth
  Common synth_c;
  std::string synth_out;
  std::optional<std::size_t> synth_concepts;
  std::optional<double> synth_sep;
  std::optional<std::string> synth_days, synth_channel, synth_band;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (trace CSVs + manifest)");
  add_common(synth, synth_c, false);
  synth->add_option("--out", synth_out, "output directory")->required();
  flag(synth, synth_c, "--concepts", "synth.concepts", synth_concepts, "number of concepts");
  flag(synth, synth_c, "--separability", "synth.separability", synth_sep, "concept separability in [0, 1]");
  flag(synth, synth_c, "--days", "synth.days", synth_days, "comma-separated days");
  flag(synth, synth_c, "--target-channel", "synth.target_channel", synth_channel, "localize to one channel");
  flag(synth, synth_c, "--target-band", "synth.target_band", synth_band, "localize to one band");

  // preprocess
  Common pre_c;
  std::string pre_trace, pre_out;
  auto* pre = app.add_subcommand("preprocess", "clip, re-reference, filter, normalize and trim one trace");
  add_common(pre, pre_c, false);
  pre->add_option("--trace", pre_trace, "16-channel trace CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "output CSV of the clean 14-channel trace")->required();

  // segment
  Common seg_c;
  std::string seg_trace, seg_out;
  auto* seg = app.add_subcommand("segment", "segment one trace; prints window counts as JSON");
  add_common(seg, seg_c, false);
  seg->add_option("--trace", seg_trace, "16-channel trace CSV")->required()->check(CLI::ExistingFile);
  seg->add_option("--out", seg_out, "CSV of kept window offsets");

  // train
  Common train_c;
  DataSource train_data;
  std::string train_model, train_curve, train_concepts;
  std::optional<std::size_t> train_epochs, train_steps;
  auto* tr = app.add_subcommand("train", "train an encoder on every trace of the dataset");
  add_common(tr, train_c, false);
  train_data.add(tr);
  tr->add_option("--model", train_model, "output model file")->required();
  tr->add_option("--curve", train_curve, "training curve CSV (step,loss)");
  tr->add_option("--concepts", train_concepts, "comma-separated concepts to train on (default: all)");
  flag(tr, train_c, "--epochs", "train.epochs", train_epochs, "epochs");
  flag(tr, train_c, "--steps", "train.steps", train_steps, "steps per epoch");

  // eval
  Common eval_c;
  DataSource eval_data;
  std::string eval_out;
  std::optional<std::size_t> eval_trials;
  std::optional<std::string> eval_backend;
  std::optional<int> eval_day;
  auto* ev = app.add_subcommand("eval", "run trials; prints a JSON summary with bootstrap intervals");
  add_common(ev, eval_c, true);
  eval_data.add(ev);
  ev->add_option("--out", eval_out, "directory for trials.csv, summary.json and concepts.json");
  flag(ev, eval_c, "--trials", "eval.trials", eval_trials, "number of trials");
  flag(ev, eval_c, "--backend", "eval.backend", eval_backend, "encoder, oracle or random");
  flag(ev, eval_c, "--day", "eval.day", eval_day, "evaluation day");

  // ablate
  Common abl_c;
  DataSource abl_data;
  std::string abl_channels, abl_bands;
  bool abl_hemi = false;
  std::optional<std::size_t> abl_trials;
  std::optional<std::string> abl_backend;
  auto* ab = app.add_subcommand("ablate", "per-channel, per-band or per-hemisphere summaries as JSON");
  add_common(ab, abl_c, true);
  abl_data.add(ab);
  ab->add_option("--channels", abl_channels, "single-channel variants (comma-separated, or 'all')");
  ab->add_option("--bands", abl_bands, "band variants (comma-separated, or 'all')");
  ab->add_flag("--hemispheres", abl_hemi, "left and right hemisphere variants");
  flag(ab, abl_c, "--trials", "eval.trials", abl_trials, "trials per variant");
  flag(ab, abl_c, "--backend", "eval.backend", abl_backend, "encoder, oracle or random");

  // sweep
  Common sw_c;
  DataSource sw_data;
  std::string sw_axis, sw_values;
  std::optional<std::size_t> sw_trials;
  std::optional<std::string> sw_backend;
  auto* sw = app.add_subcommand("sweep", "vary one data budget; prints summaries as JSON");
  add_common(sw, sw_c, true);
  sw_data.add(sw);
  sw->add_option("--axis", sw_axis, "train_concepts, train_segments or index_query_segments")->required();
  sw->add_option("--values", sw_values, "comma-separated budgets")->required();
  flag(sw, sw_c, "--trials", "eval.trials", sw_trials, "trials per point");
  flag(sw, sw_c, "--backend", "eval.backend", sw_backend, "encoder, oracle or random");

  // index
  Common idx_c;
  std::string idx_dir, idx_model, idx_doc, idx_uri, idx_trace;
  std::size_t idx_budget = 80;
  auto* ix = app.add_subcommand("index", "add a document keyed by a recollection trace");
  add_common(ix, idx_c, false);
  ix->add_option("--index", idx_dir, "index directory (created when missing)")->required();
  ix->add_option("--model", idx_model, "encoder model (required for a new index)");
  ix->add_option("--doc-id", idx_doc, "document id")->required();
  ix->add_option("--uri", idx_uri, "document uri")->required();
  ix->add_option("--trace", idx_trace, "16-channel trace CSV")->required()->check(CLI::ExistingFile);
  ix->add_option("--budget", idx_budget, "segments stored for the document")->check(CLI::PositiveNumber);

  // query
  Common q_c;
  std::string q_dir, q_model, q_trace;
  std::size_t q_budget = 80, q_top = 3;
  auto* qu = app.add_subcommand("query", "rank indexed documents for a trace; prints JSON");
  add_common(qu, q_c, false);
  qu->add_option("--index", q_dir, "index directory")->required()->check(CLI::ExistingDirectory);
  qu->add_option("--model", q_model, "encoder model (default: the one recorded in the index)");
  qu->add_option("--trace", q_trace, "16-channel trace CSV")->required()->check(CLI::ExistingFile);
  qu->add_option("--budget", q_budget, "query segments used")->check(CLI::PositiveNumber);
  qu->add_option("--top", q_top, "documents returned")->check(CLI::PositiveNumber);

  // export-embeddings
  Common ex_c;
  DataSource ex_data;
  std::string ex_model, ex_out;
  auto* ex = app.add_subcommand("export-embeddings", "write concept,day,offset,e0..e31 for every segment");
  add_common(ex, ex_c, false);
  ex_data.add(ex);
  ex->add_option("--model", ex_model, "encoder model")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "output CSV (default: stdout)");

  // gradcheck
  Common gc_c;
  std::size_t gc_batch = 12, gc_params = 200;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer and the full model");
  add_common(gc, gc_c, false);
  gc->add_option("--batch", gc_batch, "composite batch size (even)")->check(CLI::PositiveNumber);
  gc->add_option("--min-params", gc_params, "parameters checked in the composite")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      const RunConfig cfg = synth_c.build();
      const Dataset ds = gen_dataset(cfg.synth());
      save_dataset(synth_out, ds);
      std::cout << ojson{{"traces", ds.traces.size()}, {"out", synth_out}}.dump(2) << "\n";
    } else if (*pre) {
      const RunConfig cfg = pre_c.build();
      const CleanTrace clean = clean_from_file(pre_trace, cfg);
      RawTrace out{clean.concept_id, clean.day, clean.sample_rate_hz, clean.channels, clean.samples};
      save_trace(pre_out, out);
      ojson steps = clean.steps_applied;
      std::cout << ojson{{"channels", clean.channels.size()}, {"samples", clean.n_samples()}, {"steps", steps}}.dump(2)
                << "\n";
    } else if (*seg) {
      const RunConfig cfg = seg_c.build();
      const SegmentSet set = segment_pipeline(clean_from_file(seg_trace, cfg), cfg.segment());
      if (!seg_out.empty()) {
        std::string csv = "offset\n";
        for (const auto& s : set.segments) csv += std::to_string(s.offset) + "\n";
        write_text(seg_out, csv);
      }
      std::cout << ojson{{"raw", set.provenance.raw},
                         {"after_trend", set.provenance.after_trend},
                         {"after_outlier", set.provenance.after_outlier}}
                       .dump(2)
                << "\n";
    } else if (*tr) {
      const RunConfig cfg = train_c.build();
      const PreparedDataset data = prepare_dataset(train_data.load(cfg), cfg.preprocess(), cfg.segment());
      TrainingPool pool;
      const auto wanted = split_list(train_concepts);
      for (const auto& t : data.traces) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), t.concept_id) == wanted.end()) continue;
        for (const auto& s : t.set.segments) pool.add(s);
      }
      if (pool.concepts.size() < 2) throw Error("training needs at least two concepts");
      const TrainResult result = train(pool, cfg.train());
      save_encoder(train_model, result.model, {{"seed", std::to_string(cfg.train().seed)}});
      if (!train_curve.empty()) {
        std::string csv = "step,loss\n";
        for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, result.loss_curve[i]);
          csv += buf;
        }
        write_text(train_curve, csv);
      }
      std::cout << ojson{{"concepts", pool.concepts.size()},
                         {"segments", pool.size()},
                         {"steps", result.loss_curve.size()},
                         {"final_loss", result.loss_curve.empty() ? 0.0 : result.loss_curve.back()}}
                       .dump(2)
                << "\n";
    } else if (*ev) {
      const RunConfig cfg = eval_c.build();
      EvalConfig ecfg = cfg.eval();
      ecfg.jobs = eval_c.jobs;
      const PreparedDataset data = prepare_dataset(eval_data.load(cfg), ecfg.preprocess, ecfg.segment);
      const TrialsReport report = run_trials(data, ecfg);
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        std::ostringstream trials;
        write_trials_csv(trials, report.trials);
        write_text(fs::path(eval_out) / "trials.csv", trials.str());
        write_text(fs::path(eval_out) / "summary.json", summary_json(report.summary) + "\n");
        write_text(fs::path(eval_out) / "concepts.json",
                   concept_accuracy_json(per_concept_accuracy(report.trials, ecfg.bootstrap_resamples,
                                                              ecfg.ci_level, ecfg.seed)) +
                       "\n");
      }
      std::cout << report_object(report).dump(2) << "\n";
    } else if (*ab) {
      const RunConfig cfg = abl_c.build();
      EvalConfig ecfg = cfg.eval();
      ecfg.jobs = abl_c.jobs;
      std::vector<AblationVariant> variants;
      if (!abl_channels.empty()) {
        const ChannelSet which = abl_channels == "all" ? ChannelSet::canonical14() : ChannelSet(split_list(abl_channels));
        for (auto& v : single_channel_variants(which)) variants.push_back(std::move(v));
      }
      if (!abl_bands.empty()) {
        std::vector<BandSpec> bands;
        if (abl_bands == "all") {
          bands = BandSpec::rhythms();
        } else {
          for (const auto& b : split_list(abl_bands)) bands.push_back(BandSpec::by_name(b));
        }
        for (auto& v : band_variants(bands)) variants.push_back(std::move(v));
      }
      if (abl_hemi) {
        for (auto& v : hemisphere_variants()) variants.push_back(std::move(v));
      }
      if (variants.empty()) throw CLI::RequiredError("--channels, --bands or --hemispheres");
      const auto results = ablate(abl_data.load(cfg), ecfg, variants);
      ojson out = ojson::array();
      for (const auto& r : results) out.push_back({{"variant", r.variant.name}, {"summary", report_object(r.report)}});
      std::cout << out.dump(2) << "\n";
    } else if (*sw) {
      const RunConfig cfg = sw_c.build();
      EvalConfig ecfg = cfg.eval();
      ecfg.jobs = sw_c.jobs;
      const SweepAxis axis = parse_axis(sw_axis);
      const PreparedDataset data = prepare_dataset(sw_data.load(cfg), ecfg.preprocess, ecfg.segment);
      const auto points = budget_sweep(data, ecfg, axis, parse_size_list(sw_values));
      ojson out = ojson::array();
      for (const auto& p : points) out.push_back({{axis_name(axis), p.value}, {"summary", report_object(p.report)}});
      std::cout << out.dump(2) << "\n";
    } else if (*ix) {
      const RunConfig cfg = idx_c.build();
      const bool exists = fs::exists(fs::path(idx_dir) / "index.tsv");
      std::string model_path = idx_model;
      if (model_path.empty() && exists) model_path = DocumentIndex::saved_encoder_path(idx_dir);
      if (model_path.empty()) throw Error("a new index needs --model");
      const auto model = load_model(model_path);
      DocumentIndex index = exists ? DocumentIndex::load(idx_dir, model) : DocumentIndex(model, cfg.get_size("knn.k"));
      const SegmentSet set = segment_pipeline(clean_from_file(idx_trace, cfg), cfg.segment());
      index.index_document(idx_doc, idx_uri, set.segments, idx_budget);
      index.save(idx_dir, fs::absolute(model_path).string());
      std::cout << ojson{{"documents", index.entries().size()}, {"embeddings", index.embedding_count()}}.dump(2)
                << "\n";
    } else if (*qu) {
      const RunConfig cfg = q_c.build();
      const std::string model_path = q_model.empty() ? DocumentIndex::saved_encoder_path(q_dir) : q_model;
      if (model_path.empty()) throw Error("index records no model; pass --model");
      const DocumentIndex index = DocumentIndex::load(q_dir, load_model(model_path));
      const SegmentSet set = segment_pipeline(clean_from_file(q_trace, cfg), cfg.segment());
      std::cout << ranking_json(index.query(set.segments, q_budget, q_top)) << "\n";
    } else if (*ex) {
      const RunConfig cfg = ex_c.build();
      const PreparedDataset data = prepare_dataset(ex_data.load(cfg), cfg.preprocess(), cfg.segment());
      const EncoderModel model = load_encoder(ex_model);
      std::ostringstream out;
      export_embeddings(out, data, model);
      emit(ex_out, out.str());
    } else if (*gc) {
      const RunConfig cfg = gc_c.build();
      bool ok = true;
      double worst = 0.0;
      auto report = [&](const NamedGradCheck& c) {
        std::cout << c.name << " max_rel_error=" << c.result.max_rel_error << " checked=" << c.result.checked
                  << (c.passed() ? " ok" : " FAIL") << "\n";
        ok = ok && c.passed();
        worst = std::max(worst, c.result.max_rel_error);
      };
      for (const auto& c : layer_grad_checks(cfg.seed())) report(c);
      report(composite_grad_check(cfg.seed(), gc_batch, gc_params));
      std::cout << "max_rel_error " << worst << "\n";
      return ok ? 0 : 1;
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "memdecode: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "memdecode: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
