#pragma once

// Experiment configuration: "key = value" lines with dotted keys, '#'
// comments. Every key can also be overridden from the command line.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snmt/corpus.hpp"
#include "snmt/strategies.hpp"
#include "snmt/trainer.hpp"

namespace snmt {

struct SplitPaths {
  std::string source;
  std::string target;
  std::string tags;
  std::map<std::string, std::string> features;  // source feature name -> path

  bool operator==(const SplitPaths&) const = default;
};

enum class MisalignedPolicy { drop, error };

struct ExperimentConfig {
  // data
  SplitPaths train;
  SplitPaths dev;
  SplitPaths test;
  std::string work_dir = "work";
  MisalignedPolicy on_misaligned = MisalignedPolicy::drop;

  // preprocessing
  std::size_t bpe_merges = 0;
  std::size_t bpe_min_frequency = 2;
  std::string bpe_table;  // existing merge file; replaces learning when set
  VocabularyCaps vocab;
  std::size_t max_source_length = 50;
  std::size_t max_target_length = 50;
  std::size_t max_interleaved_length = 100;

  // model and strategy
  StrategyConfig strategy;
  ModelSizes sizes;
  double init_range = 0.08;

  // training
  TrainingSchedule schedule;
  AdamOptions adam;

  // decoding
  std::size_t beam = 5;
  std::size_t decode_max_len = 50;
  std::size_t decode_interleaved_max_len = 100;
  std::size_t ensemble_size = 1;

  // evaluation
  std::size_t resamples = 1000;
  std::string construct_rules;  // empty: built-in defaults

  std::uint64_t seed = 1;

  /// Length limits for the configured strategy.
  LengthLimits length_limits() const;
  /// Decoding length limit for the configured strategy.
  std::size_t max_decode_length() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Applies one key. Unknown keys and malformed values throw, naming the key.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

ExperimentConfig parse_config(const std::vector<std::string>& lines);
ExperimentConfig load_config(const std::string& path);
/// Every key, sorted, one "key = value" per line.
std::vector<std::string> serialize_config(const ExperimentConfig& config);
/// Parses lines, then applies overrides in order.
void apply_overrides(ExperimentConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides);

/// Names of every fixed key (dynamic feature keys excluded).
std::vector<std::string> config_keys();

/// Independent stream seeds derived from the experiment seed.
std::uint64_t sub_seed(std::uint64_t seed, const std::string& name);

}  // namespace snmt
