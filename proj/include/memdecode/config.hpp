// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration shared by every command.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "memdecode/eval.hpp"
#include "memdecode/synth.hpp"

namespace memdecode {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

class RunConfig {
 public:
  RunConfig();

  /// Throws Error on unknown keys or unparseable values.
  void set(const std::string& key, const std::string& value);
  /// `key=value` form, as given to --set.
  void set_assignment(const std::string& assignment);
  /// Lines of `key = value`; '#' starts a comment. Errors carry the line number.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<config>");

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;

  PreprocessConfig preprocess() const;
  SegmentConfig segment() const;
  TrainConfig train() const;
  EvalConfig eval() const;
  SynthConfig synth() const;
  double sample_rate_hz() const;

  /// Sorted `key=value` lines.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// `key  default  help` table for --help footers.
std::string config_help();

std::vector<std::string> split_list(const std::string& csv);
std::vector<std::size_t> parse_size_list(const std::string& csv);
std::vector<int> parse_day_list(const std::string& csv);

}  // namespace memdecode
