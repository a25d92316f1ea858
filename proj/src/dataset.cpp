// SPDX-License-Identifier: Apache-2.0

#include "memdecode/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "csv.hpp"
#include "memdecode/rng.hpp"

namespace memdecode {

namespace fs = std::filesystem;

ChannelSet::ChannelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw Error("empty channel label");
    if (!seen.insert(l).second) throw Error("duplicate channel label: " + l);
  }
}

ChannelSet ChannelSet::canonical16() {
  return ChannelSet({"Fp1", "Fp2", "F7", "F3", "F4", "F8", "T3", "C3", "C4", "T4", "T5", "P3",
                     "P4", "T6", "O1", "O2"});
}

ChannelSet ChannelSet::canonical14() {
  return ChannelSet(
      {"Fp1", "Fp2", "F7", "F3", "F4", "F8", "T3", "C3", "C4", "T4", "T5", "P3", "P4", "T6"});
}

ChannelSet ChannelSet::left_hemisphere() {
  return ChannelSet({"Fp1", "F7", "F3", "T3", "C3", "T5", "P3"});
}

ChannelSet ChannelSet::right_hemisphere() {
  return ChannelSet({"Fp2", "F8", "F4", "T4", "C4", "T6", "P4"});
}

ChannelSet ChannelSet::parse(std::string_view text) {
  std::vector<std::string> labels;
  for (auto part : csv::split(text)) {
    if (!part.empty()) labels.emplace_back(part);
  }
  if (labels.empty()) throw Error("empty channel list");
  return ChannelSet(std::move(labels));
}

std::optional<std::size_t> ChannelSet::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t ChannelSet::require(std::string_view label) const {
  if (auto i = index_of(label)) return *i;
  throw Error("unknown channel: " + std::string(label));
}

std::string ChannelSet::join(char sep) const {
  std::string out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) out += sep;
    out += labels_[i];
  }
  return out;
}

std::string_view occipital_reference(std::string_view label) {
  static const std::map<std::string, std::string, std::less<>> table = {
      {"Fp1", "O1"}, {"F7", "O1"}, {"F3", "O1"}, {"T3", "O1"}, {"C3", "O1"},
      {"T5", "O1"},  {"P3", "O1"}, {"Fp2", "O2"}, {"F8", "O2"}, {"F4", "O2"},
      {"T4", "O2"},  {"C4", "O2"}, {"T6", "O2"}, {"P4", "O2"},
  };
  const auto it = table.find(label);
  if (it == table.end()) {
    throw Error("no ipsilateral occipital reference for channel " + std::string(label));
  }
  return it->second;
}

std::vector<std::string> Manifest::concepts() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.concept_id);
  return {s.begin(), s.end()};
}

fs::path Manifest::resolve(const ManifestEntry& e) const {
  return e.file.is_absolute() ? e.file : base_dir / e.file;
}

Manifest load_manifest(const fs::path& path) {
  auto in = csv::open_in(path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty manifest (no header)");
  const auto header = csv::split(line);
  if (header.size() != 4 || header[0] != "file" || header[1] != "concept" ||
      header[2] != "group" || header[3] != "day") {
    throw Error(path.string() + ": manifest header must be file,concept,group,day");
  }
  std::set<std::pair<std::string, int>> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (cells.size() != 4) throw Error(where + ": expected 4 columns");
    const auto day = csv::parse_int(cells[3]);
    if (!day || !valid_day(static_cast<int>(*day))) {
      throw Error(where + ": invalid day '" + std::string(cells[3]) + "'");
    }
    ManifestEntry e{fs::path(std::string(cells[0])), std::string(cells[1]),
                    std::string(cells[2]), static_cast<int>(*day)};
    if (e.concept_id.empty()) throw Error(where + ": empty concept");
    if (!seen.emplace(e.concept_id, e.day).second) {
      throw Error(where + ": duplicate (concept, day) = (" + e.concept_id + ", " +
                  std::to_string(e.day) + ")");
    }
    if (!fs::exists(m.resolve(e))) throw Error(where + ": missing file " + m.resolve(e).string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  std::string text = "file,concept,group,day\n";
  for (const auto& e : manifest.entries) {
    text += e.file.string() + "," + e.concept_id + "," + e.group_id + "," +
            std::to_string(e.day) + "\n";
  }
  auto out = csv::open_out(path.string());
  out << text;
}

RawTrace load_trace(const fs::path& path, const ChannelSet& channels, double sample_rate_hz) {
  auto in = csv::open_in(path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty trace file");
  const auto header = csv::split(line);
  if (header.empty() || header[0] != "timestamp") {
    throw Error(path.string() + ": first column must be 'timestamp'");
  }
  std::vector<std::size_t> column_of(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), channels[c]);
    if (it == header.end()) throw Error(path.string() + ": missing channel column " + channels[c]);
    column_of[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    const std::string where = path.string() + " row " + std::to_string(rows + 1);
    if (cells.size() != header.size()) throw Error(where + ": wrong column count");
    if (!csv::parse_double(cells[0])) throw Error(where + ": non-numeric timestamp");
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto v = csv::parse_double(cells[column_of[c]]);
      if (!v) throw Error(where + ": non-numeric value in column " + channels[c]);
      if (!std::isfinite(*v)) throw Error(where + ": non-finite value in column " + channels[c]);
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows < 2) throw Error(path.string() + ": fewer than 2 samples");

  RawTrace t;
  t.sample_rate_hz = sample_rate_hz;
  t.channels = channels;
  t.samples = Matrix<double>(rows, channels.size());
  std::copy(values.begin(), values.end(), t.samples.data());
  return t;
}

void save_trace(const fs::path& path, const RawTrace& trace) {
  std::string text = "timestamp";
  for (const auto& l : trace.channels.labels()) text += "," + l;
  text += '\n';
  text.reserve(trace.samples.size() * 12);
  for (std::size_t r = 0; r < trace.n_samples(); ++r) {
    csv::append_fixed6(text, static_cast<double>(r) / trace.sample_rate_hz);
    for (std::size_t c = 0; c < trace.samples.cols(); ++c) {
      text += ',';
      csv::append_fixed6(text, trace.samples(r, c));
    }
    text += '\n';
  }
  auto out = csv::open_out(path.string());
  out << text;
}

ConceptSplit split_concepts(std::vector<std::string> concepts, std::size_t test_size,
                            std::uint64_t seed) {
  std::sort(concepts.begin(), concepts.end());
  concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
  if (test_size >= concepts.size()) {
    throw Error("test size " + std::to_string(test_size) + " must be smaller than the " +
                std::to_string(concepts.size()) + " available concepts");
  }
  Rng rng(seed);
  rng.shuffle(concepts);
  ConceptSplit split;
  split.seed = seed;
  split.test.assign(concepts.begin(), concepts.begin() + static_cast<std::ptrdiff_t>(test_size));
  split.train.assign(concepts.begin() + static_cast<std::ptrdiff_t>(test_size), concepts.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::vector<std::string> Dataset::concepts() const {
  std::set<std::string> s;
  for (const auto& t : traces) s.insert(t.concept_id);
  return {s.begin(), s.end()};
}

const RawTrace* Dataset::find(std::string_view concept_id, int day) const {
  for (const auto& t : traces) {
    if (t.concept_id == concept_id && t.day == day) return &t;
  }
  return nullptr;
}

Dataset load_dataset(const fs::path& dir_or_manifest, double sample_rate_hz) {
  const fs::path manifest_path =
      fs::is_directory(dir_or_manifest) ? dir_or_manifest / "manifest.csv" : dir_or_manifest;
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  ds.traces.reserve(ds.manifest.entries.size());
  for (const auto& e : ds.manifest.entries) {
    RawTrace t = load_trace(ds.manifest.resolve(e), ChannelSet::canonical16(), sample_rate_hz);
    t.concept_id = e.concept_id;
    t.day = e.day;
    ds.traces.push_back(std::move(t));
  }
  return ds;
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  Manifest m;
  m.base_dir = dir;
  for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
    const auto& t = dataset.traces[i];
    const std::string name = t.concept_id + "_day" + std::to_string(t.day) + ".csv";
    save_trace(dir / name, t);
    std::string group;
    for (const auto& e : dataset.manifest.entries) {
      if (e.concept_id == t.concept_id && e.day == t.day) group = e.group_id;
    }
    m.entries.push_back({name, t.concept_id, group, t.day});
  }
  save_manifest(dir / "manifest.csv", m);
}

}  // namespace memdecode
