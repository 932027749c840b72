#pragma once

// Corpus BLEU (multi-bleu style: corpus-level clipped counts, n = 1..4, no
// smoothing), paired bootstrap resampling, construct and length breakdowns,
// and supertag prediction accuracy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace snmt {

using Sentence = std::vector<std::string>;

inline constexpr std::size_t kBleuOrder = 4;

/// Sufficient statistics of one or more sentences.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& other);
};

struct BleuScore {
  double score = 0.0;  // [0, 100]
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref);
BleuScore bleu_from_stats(const BleuStats& stats);
BleuScore corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

/// "BLEU = 27.30, 60.1/33.2/20.4/12.9 (BP=1.000, ratio=1.020, hyp_len=..., ref_len=...)"
std::string format_bleu(const BleuScore& score);

struct SignificanceResult {
  double p_value = 1.0;
  std::size_t resamples = 0;
  std::size_t wins = 0;  // resamples where B scored strictly higher than A
  std::size_t ties = 0;
  double bleu_a = 0.0;
  double bleu_b = 0.0;
  double mean_delta = 0.0;  // mean of BLEU(B) - BLEU(A)
  double min_delta = 0.0;
  double max_delta = 0.0;
};

/// Paired bootstrap: p is the fraction of resamples in which B does not beat
/// A. Ties count against significance.
SignificanceResult bootstrap_significance(std::span<const Sentence> hyp_a,
                                          std::span<const Sentence> hyp_b,
                                          std::span<const Sentence> references,
                                          std::size_t resamples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Linguistic construct subsets

struct ConstructRule {
  std::string subset;
  std::string pattern;
  bool exact = false;  // "=pattern" in the rule file

  bool matches(const std::string& tag) const;
};

class ConstructRules {
 public:
  ConstructRules() = default;
  explicit ConstructRules(std::vector<ConstructRule> rules) : rules_(std::move(rules)) {}

  /// Parses "subset<TAB>pattern" lines; blank lines and '#' comments are skipped.
  static ConstructRules parse(std::span<const std::string> lines);
  static ConstructRules load(const std::string& path);
  static ConstructRules defaults();

  const std::vector<ConstructRule>& rules() const { return rules_; }
  /// Subset names in first-appearance order.
  std::vector<std::string> subsets() const;

 private:
  std::vector<ConstructRule> rules_;
};

/// The default rule file, verbatim.
const std::vector<std::string>& default_construct_rule_lines();

std::vector<std::set<std::string>> classify_constructs(std::span<const Sentence> reference_tags,
                                                       const ConstructRules& rules);

// ---------------------------------------------------------------------------
// Length buckets over source BPE length: [1,15), [15,25], (25,35], (35,inf)

inline constexpr std::size_t kLengthBucketCount = 4;
const std::array<std::string, kLengthBucketCount>& length_bucket_names();
std::size_t length_bucket(std::size_t source_length);
std::vector<std::size_t> length_buckets(std::span<const std::size_t> source_lengths);

// ---------------------------------------------------------------------------
// Tag accuracy

struct TagAccuracy {
  std::optional<double> accuracy;  // percent, over length-matched sentences only
  double match_rate = 0.0;         // fraction of sentences whose lengths match
  std::size_t matched_sentences = 0;
  std::size_t tokens = 0;
  std::size_t correct = 0;
};

TagAccuracy tag_accuracy(std::span<const Sentence> predicted, std::span<const Sentence> reference);

// ---------------------------------------------------------------------------
// Breakdown reports

struct SubsetSpec {
  std::string name;
  std::vector<std::size_t> members;  // sentence indices
};

std::vector<SubsetSpec> construct_subsets(std::span<const Sentence> reference_tags,
                                          const ConstructRules& rules);
std::vector<SubsetSpec> length_subsets(std::span<const std::size_t> source_lengths);

struct ReportRow {
  std::string name;
  std::size_t count = 0;
  double bleu_system = 0.0;
  double bleu_baseline = 0.0;
  double delta = 0.0;
};

struct EvaluationReport {
  BleuScore corpus_system;
  BleuScore corpus_baseline;
  std::size_t sentences = 0;
  std::vector<ReportRow> rows;
  std::optional<SignificanceResult> significance;
  std::optional<TagAccuracy> tags;

  std::string to_text() const;
  std::string to_tsv() const;
};

EvaluationReport breakdown_report(std::span<const Sentence> system, std::span<const Sentence> baseline,
                                  std::span<const Sentence> references,
                                  std::span<const SubsetSpec> subsets);

}  // namespace snmt
