#pragma once

// The experiment stages behind the command-line tool. Each stage reads and
// writes files under the configured work directory:
//
//   merges.txt                          BPE merge table
//   vocab.<role>.txt, .tagset.txt       vocabularies (source, target, tags, feature.<name>)
//   <split>.src.bpe, <split>.tgt.bpe    model-facing token streams
//   <split>.src.ids, <split>.tgt.ids    id streams (<split>.tag.ids for multitask)
//   <split>.feature.<name>.bpe          source feature labels per subunit
//   <split>.feature.<name>.ids          source feature ids per subunit
//   <split>.feature.<name>.txt          word-level feature input (file features only)
//   <split>.ref, <split>.ref.tags       references for retained sentences
//   manifest.tsv                        sentence and vocabulary counts
//   train/                              checkpoints, train.log.tsv, checkpoints.txt

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snmt/config.hpp"
#include "snmt/evaluation.hpp"
#include "snmt/inference.hpp"
#include "snmt/trainer.hpp"

namespace snmt {

struct SplitCounts {
  std::size_t lines = 0;
  std::size_t misaligned = 0;
  std::size_t too_long = 0;
  std::size_t kept = 0;
};

struct PreprocessResult {
  std::map<std::string, SplitCounts> splits;
  std::vector<Misalignment> misaligned;  // train split
  std::size_t merges = 0;
  std::vector<std::string> manifest;
};

PreprocessResult run_preprocess(const ExperimentConfig& config, std::ostream& log);

/// Preprocessed artifacts read back from the work directory.
struct PreparedData {
  MergeTable merges;
  Vocabularies vocabs;
  ModelConfig model;
  std::map<std::string, std::uint64_t> vocabulary_hashes;
};

PreparedData load_prepared(const ExperimentConfig& config);
/// Encoded examples of a preprocessed split.
std::vector<EncodedExample> load_examples(const ExperimentConfig& config, const PreparedData& prepared,
                                          const std::string& split);
std::vector<Sentence> load_references(const ExperimentConfig& config, const std::string& split);

struct TrainSummary {
  TrainingResult result;
  std::vector<std::string> checkpoints;  // best first
};

TrainSummary run_train(const ExperimentConfig& config, std::ostream& log);

struct TranslateRequest {
  /// Raw word-level source; empty uses the configured test split.
  std::string source;
  std::map<std::string, std::string> features;
  std::string output;       // empty: <work_dir>/<split>.hyp
  std::string tags_output;  // empty: <work_dir>/<split>.hyp.tags when the strategy predicts tags
  std::vector<std::string> models;  // empty: best retained checkpoints
  unsigned threads = 1;
};

struct TranslateResult {
  std::vector<std::string> translations;
  std::vector<std::string> tags;  // one line per sentence, may be empty
  std::size_t empty_outputs = 0;
  std::size_t alternation_violations = 0;  // interleaved outputs only
  std::string output_path;
  std::string tags_path;
};

TranslateResult run_translate(const ExperimentConfig& config, const TranslateRequest& request, std::ostream& log);

/// Word-level source sentences encoded as model input (BPE, features, ids).
std::vector<std::map<std::string, std::vector<int>>> encode_sources(
    const ExperimentConfig& config, const PreparedData& prepared, const std::vector<std::string>& source_lines,
    const std::map<std::string, std::vector<std::string>>& feature_lines);

struct ScoreRequest {
  std::string hypotheses;
  std::string references;
  std::string baseline;  // optional: adds a bootstrap comparison baseline -> hypotheses
};

EvaluationReport run_score(const ExperimentConfig& config, const ScoreRequest& request);

struct AnalyzeRequest {
  std::string system;
  std::string baseline;
  std::string references;
  std::string reference_tags;
  std::string source;             // raw source, measured in BPE units for length buckets
  std::string predicted_tags;     // optional
  std::string output_prefix;      // writes <prefix>.txt and <prefix>.tsv when set
};

EvaluationReport run_analyze(const ExperimentConfig& config, const AnalyzeRequest& request);

/// Vocabulary hashes by role, as stored in checkpoints.
std::map<std::string, std::uint64_t> vocabulary_hashes(const Vocabularies& vocabs);

}  // namespace snmt
