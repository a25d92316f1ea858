// SPDX-License-Identifier: Apache-2.0
//
// EEG recordings, their concept/day manifest, and concept splits.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memdecode/common.hpp"

namespace memdecode {

/// Ordered list of unique electrode labels.
class ChannelSet {
 public:
  ChannelSet() = default;
  explicit ChannelSet(std::vector<std::string> labels);

  /// Fp1, Fp2, F7, F3, F4, F8, T3, C3, C4, T4, T5, P3, P4, T6, O1, O2.
  static ChannelSet canonical16();
  /// canonical16() without the occipital pair.
  static ChannelSet canonical14();
  static ChannelSet left_hemisphere();
  static ChannelSet right_hemisphere();
  /// Parses "F3,C3" style lists.
  static ChannelSet parse(std::string_view csv);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }

  std::optional<std::size_t> index_of(std::string_view label) const;
  bool contains(std::string_view label) const { return index_of(label).has_value(); }
  /// Index of a label, throwing Error when absent.
  std::size_t require(std::string_view label) const;

  std::string join(char sep = ',') const;

  bool operator==(const ChannelSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

/// Ipsilateral occipital reference: "O1" for left-side electrodes, "O2" for
/// right-side ones. Throws for occipital or unknown labels.
std::string_view occipital_reference(std::string_view label);

inline bool valid_day(int day) { return day == 0 || day == 1 || day == 3; }

struct RawTrace {
  std::string concept_id;
  int day = 0;
  double sample_rate_hz = 125.0;
  ChannelSet channels;
  Matrix<double> samples;  // [n_samples x n_channels], microvolts

  std::size_t n_samples() const { return samples.rows(); }
  double duration_s() const { return static_cast<double>(n_samples()) / sample_rate_hz; }
};

struct ManifestEntry {
  std::filesystem::path file;  // as written in the manifest
  std::string concept_id;
  std::string group_id;
  int day = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  /// Directory relative file paths are resolved against.
  std::filesystem::path base_dir;

  std::vector<std::string> concepts() const;
  std::filesystem::path resolve(const ManifestEntry& e) const;
};

/// Reads a `file,concept,group,day` CSV; validates days, (concept, day)
/// uniqueness and file existence.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Reads a `timestamp,<labels...>` CSV. Columns are matched by label and
/// returned in the order of `channels`; unrelated columns are ignored.
RawTrace load_trace(const std::filesystem::path& path,
                    const ChannelSet& channels = ChannelSet::canonical16(),
                    double sample_rate_hz = 125.0);
/// Writes values with six fractional digits.
void save_trace(const std::filesystem::path& path, const RawTrace& trace);

struct ConceptSplit {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
  std::uint64_t seed = 0;
};

ConceptSplit split_concepts(std::vector<std::string> concepts, std::size_t test_size,
                            std::uint64_t seed);

/// All traces of a manifest, loaded.
struct Dataset {
  Manifest manifest;
  std::vector<RawTrace> traces;

  std::vector<std::string> concepts() const;
  const RawTrace* find(std::string_view concept_id, int day) const;
};

/// `dir/manifest.csv` when given a directory; the manifest itself otherwise.
Dataset load_dataset(const std::filesystem::path& dir_or_manifest, double sample_rate_hz = 125.0);
/// Writes every trace as `<concept>_day<d>.csv` plus `manifest.csv` into dir.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace memdecode
