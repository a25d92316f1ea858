// SPDX-License-Identifier: Apache-2.0

#include "memdecode/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "csv.hpp"

namespace memdecode {

namespace {

enum class Kind { real, optional_real, count, optional_count, day, flag, mode, backend, band, channels, days,
                  channel, optional_band };

struct KeySpec {
  ConfigKey key;
  Kind kind;
};

const std::vector<KeySpec>& specs() {
  static const std::vector<KeySpec> s = {
      {{"seed", "0", "run seed; every random stream derives from it"}, Kind::count},
      {{"data.sample_rate_hz", "125", "sample rate of loaded traces (Hz)"}, Kind::real},
      {{"clip.lo", "0.005", "lower clipping quantile"}, Kind::real},
      {{"clip.hi", "0.995", "upper clipping quantile"}, Kind::real},
      {{"band.name", "broadband", "pass band: broadband, delta, theta, alpha, beta, gamma"}, Kind::band},
      {{"filter.low_hz", "", "lower cutoff override (Hz); empty keeps the band edge"}, Kind::optional_real},
      {{"filter.high_hz", "", "upper cutoff override (Hz); empty keeps the band edge"}, Kind::optional_real},
      {{"filter.taps", "501", "FIR length (odd)"}, Kind::count},
      {{"trim.seconds", "4", "seconds trimmed from each end"}, Kind::real},
      {{"channels.subset", "", "comma-separated channels kept after preprocessing; empty keeps all 14"},
       Kind::channels},
      {{"segment.window", "100", "window length (samples)"}, Kind::count},
      {{"segment.stride", "10", "window stride (samples)"}, Kind::count},
      {{"segment.trend_frac", "0.05", "fraction of most-trending windows dropped"}, Kind::real},
      {{"segment.outlier_frac", "0.05", "fraction of most-anomalous windows dropped"}, Kind::real},
      {{"iforest.trees", "100", "isolation forest size"}, Kind::count},
      {{"iforest.subsample", "256", "isolation forest subsample"}, Kind::count},
      {{"iforest.seed", "0", "isolation forest seed"}, Kind::count},
      {{"train.epochs", "8", "training epochs"}, Kind::count},
      {{"train.steps", "500", "steps per epoch"}, Kind::count},
      {{"train.per_concept", "8", "segments per concept in a batch"}, Kind::count},
      {{"train.noise_variance", "0.1", "variance of the Gaussian batch noise"}, Kind::real},
      {{"train.temperature", "0.1", "contrastive temperature"}, Kind::real},
      {{"train.mode", "variant", "contrastive loss: variant (anchor included) or standard"}, Kind::mode},
      {{"train.seed", "", "training seed; empty uses seed"}, Kind::optional_count},
      {{"optim.learning_rate", "0.001", "RMSprop learning rate"}, Kind::real},
      {{"optim.decay", "0.9", "RMSprop decay"}, Kind::real},
      {{"optim.epsilon", "1e-7", "RMSprop epsilon"}, Kind::real},
      {{"knn.k", "25", "neighbours per segment vote"}, Kind::count},
      {{"knn.normalize", "false", "L2-normalize embeddings before the KNN"}, Kind::flag},
      {{"eval.backend", "encoder", "segment classifier: encoder, oracle, random"}, Kind::backend},
      {{"eval.test_size", "25", "held-out concepts per trial"}, Kind::count},
      {{"eval.reference_day", "0", "day whose segments form the KNN references"}, Kind::day},
      {{"eval.day", "1", "day evaluated"}, Kind::day},
      {{"eval.trials", "25", "trials per run"}, Kind::count},
      {{"eval.min_band_trials", "20", "minimum trials per band ablation"}, Kind::count},
      {{"eval.train_concepts", "0", "training concepts used; 0 uses all"}, Kind::count},
      {{"eval.train_segments", "0", "segments per training concept; 0 uses all"}, Kind::count},
      {{"eval.reference_budget", "0", "earliest segments per reference trace; 0 uses all"}, Kind::count},
      {{"eval.query_budget", "0", "earliest segments per evaluated trace; 0 uses all"}, Kind::count},
      {{"bootstrap.resamples", "10000", "bootstrap resamples"}, Kind::count},
      {{"bootstrap.level", "0.95", "confidence level"}, Kind::real},
      {{"synth.concepts", "20", "synthetic concepts"}, Kind::count},
      {{"synth.days", "0,1,3", "synthetic recording days"}, Kind::days},
      {{"synth.duration_s", "75", "trace length (s)"}, Kind::real},
      {{"synth.separability", "0.8", "weight of the concept rhythms against pink noise"}, Kind::real},
      {{"synth.noise_floor", "0.1", "white noise level"}, Kind::real},
      {{"synth.visual_noise", "1", "shared occipital noise level"}, Kind::real},
      {{"synth.scale_uv", "20", "output scale (microvolts)"}, Kind::real},
      {{"synth.jitter", "0.05", "per-trace frequency jitter (fraction of band width)"}, Kind::real},
      {{"synth.drift_day0", "1", "fingerprint weight on day 0"}, Kind::real},
      {{"synth.drift_day1", "0.85", "fingerprint weight on day 1"}, Kind::real},
      {{"synth.drift_day3", "0.7", "fingerprint weight on day 3"}, Kind::real},
      {{"synth.target_channel", "", "carry concept information on this channel only"}, Kind::channel},
      {{"synth.target_band", "", "carry concept information in this band only"}, Kind::optional_band},
  };
  return s;
}

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : specs()) {
    if (s.key.name == key) return &s;
  }
  return nullptr;
}

double to_double(const std::string& key, const std::string& v) {
  const auto d = csv::parse_double(csv::trim(v));
  if (!d) throw Error(key + ": expected a number, got '" + v + "'");
  return *d;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const auto i = csv::parse_int(csv::trim(v));
  if (!i || *i < 0) throw Error(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(*i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(key + ": expected true or false, got '" + v + "'");
}

void check(const KeySpec& s, const std::string& v) {
  const std::string& k = s.key.name;
  switch (s.kind) {
    case Kind::real: to_double(k, v); break;
    case Kind::optional_real: if (!v.empty()) to_double(k, v); break;
    case Kind::count: to_size(k, v); break;
    case Kind::optional_count: if (!v.empty()) to_size(k, v); break;
    case Kind::day: {
      const auto d = to_size(k, v);
      if (!valid_day(static_cast<int>(d))) throw Error(k + ": day must be 0, 1 or 3");
      break;
    }
    case Kind::flag: to_bool(k, v); break;
    case Kind::mode:
      if (v != "variant" && v != "standard") throw Error(k + ": expected variant or standard");
      break;
    case Kind::backend: parse_backend(v); break;
    case Kind::band: BandSpec::by_name(v); break;
    case Kind::optional_band:
      if (v.empty()) break;
      if (v == "broadband") throw Error(k + ": expected one of delta, theta, alpha, beta, gamma");
      BandSpec::by_name(v);
      break;
    case Kind::channels:
      if (!v.empty()) {
        for (const auto& c : split_list(v)) ChannelSet::canonical14().require(c);
      }
      break;
    case Kind::channel: if (!v.empty()) ChannelSet::canonical14().require(v); break;
    case Kind::days: parse_day_list(v); break;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& s : specs()) out.push_back(s.key);
    return out;
  }();
  return keys;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  if (csv::trim(csv).empty()) return out;
  for (auto part : csv::split(csv)) {
    if (part.empty()) throw Error("empty item in list '" + csv + "'");
    out.emplace_back(part);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(csv)) out.push_back(to_size("list", s));
  return out;
}

std::vector<int> parse_day_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_list(csv)) {
    const auto d = static_cast<int>(to_size("days", s));
    if (!valid_day(d)) throw Error("days: " + s + " is not 0, 1 or 3");
    out.push_back(d);
  }
  if (out.empty()) throw Error("days: empty list");
  return out;
}

RunConfig::RunConfig() {
  for (const auto& s : specs()) values_[s.key.name] = s.key.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* s = find_spec(key);
  if (!s) throw Error("unknown config key '" + key + "'");
  const std::string v(csv::trim(value));
  check(*s, v);
  values_[key] = v;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("expected key=value, got '" + assignment + "'");
  set(std::string(csv::trim(std::string_view(assignment).substr(0, eq))), assignment.substr(eq + 1));
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string body(csv::trim(std::string_view(line).substr(0, hash)));
    if (body.empty()) continue;
    try {
      set_assignment(body);
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  load_text(text.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const { return to_double(key, get(key)); }
std::size_t RunConfig::get_size(const std::string& key) const { return to_size(key, get(key)); }
int RunConfig::get_int(const std::string& key) const { return static_cast<int>(to_size(key, get(key))); }
bool RunConfig::get_bool(const std::string& key) const { return to_bool(key, get(key)); }
std::uint64_t RunConfig::seed() const { return get_size("seed"); }
double RunConfig::sample_rate_hz() const { return get_double("data.sample_rate_hz"); }

PreprocessConfig RunConfig::preprocess() const {
  PreprocessConfig p;
  p.clip_lo = get_double("clip.lo");
  p.clip_hi = get_double("clip.hi");
  p.band = BandSpec::by_name(get("band.name"));
  if (!get("filter.low_hz").empty()) p.band.low_hz = get_double("filter.low_hz");
  if (!get("filter.high_hz").empty()) p.band.high_hz = get_double("filter.high_hz");
  p.taps = get_size("filter.taps");
  p.trim_seconds = get_double("trim.seconds");
  if (!get("channels.subset").empty()) p.subset = ChannelSet(split_list(get("channels.subset")));
  return p;
}

SegmentConfig RunConfig::segment() const {
  SegmentConfig s;
  s.window = get_size("segment.window");
  s.stride = get_size("segment.stride");
  s.trend_frac = get_double("segment.trend_frac");
  s.outlier_frac = get_double("segment.outlier_frac");
  s.iforest_trees = get_size("iforest.trees");
  s.iforest_subsample = get_size("iforest.subsample");
  s.iforest_seed = get_size("iforest.seed");
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.epochs = get_size("train.epochs");
  t.steps_per_epoch = get_size("train.steps");
  t.per_concept = get_size("train.per_concept");
  t.noise_variance = get_double("train.noise_variance");
  t.temperature = get_double("train.temperature");
  t.mode = get("train.mode") == "standard" ? SupConMode::standard : SupConMode::variant;
  t.seed = get("train.seed").empty() ? seed() : get_size("train.seed");
  t.learning_rate = get_double("optim.learning_rate");
  t.decay = get_double("optim.decay");
  t.epsilon = get_double("optim.epsilon");
  return t;
}

EvalConfig RunConfig::eval() const {
  EvalConfig e;
  e.preprocess = preprocess();
  e.segment = segment();
  e.train = train();
  e.backend = parse_backend(get("eval.backend"));
  e.test_size = get_size("eval.test_size");
  e.reference_day = get_int("eval.reference_day");
  e.eval_day = get_int("eval.day");
  e.knn_k = get_size("knn.k");
  e.knn_normalize = get_bool("knn.normalize");
  e.n_trials = get_size("eval.trials");
  e.min_band_trials = get_size("eval.min_band_trials");
  e.seed = seed();
  e.train_concepts = get_size("eval.train_concepts");
  e.train_segments = get_size("eval.train_segments");
  e.reference_budget = get_size("eval.reference_budget");
  e.query_budget = get_size("eval.query_budget");
  e.bootstrap_resamples = get_size("bootstrap.resamples");
  e.ci_level = get_double("bootstrap.level");
  return e;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.n_concepts = get_size("synth.concepts");
  s.days = parse_day_list(get("synth.days"));
  s.duration_s = get_double("synth.duration_s");
  s.sample_rate_hz = sample_rate_hz();
  s.separability = get_double("synth.separability");
  s.noise_floor = get_double("synth.noise_floor");
  s.visual_noise = get_double("synth.visual_noise");
  s.scale_uv = get_double("synth.scale_uv");
  s.jitter = get_double("synth.jitter");
  s.drift_day0 = get_double("synth.drift_day0");
  s.drift_day1 = get_double("synth.drift_day1");
  s.drift_day3 = get_double("synth.drift_day3");
  if (!get("synth.target_channel").empty()) s.target_channel = get("synth.target_channel");
  if (!get("synth.target_band").empty()) s.target_band = get("synth.target_band");
  s.seed = seed();
  s.validate();
  return s;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string config_help() {
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.name.size());
  std::string out = "Config keys (--set key=value, --config FILE, or MEMDECODE_CONFIG):\n";
  for (const auto& k : config_keys()) {
    out += "  " + k.name + std::string(width + 2 - k.name.size(), ' ');
    out += "[" + (k.default_value.empty() ? std::string("unset") : k.default_value) + "]  " + k.help + "\n";
  }
  return out;
}

}  // namespace memdecode
