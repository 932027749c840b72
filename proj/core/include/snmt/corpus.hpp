#pragma once

// Corpus representations and the transforms that turn annotated sentence
// pairs into model-facing token streams.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snmt/bpe.hpp"
#include "snmt/vocabulary.hpp"

namespace snmt {

inline const std::string kIobFeature = "iob";
inline const std::string kWordFeature = "word";

struct AnnotatedSentencePair {
  std::vector<std::string> src_words;
  /// Feature name -> one label per source word.
  std::map<std::string, std::vector<std::string>> src_features;
  std::vector<std::string> tgt_words;
  /// One supertag per target word; empty when the pair is not tag-annotated.
  std::vector<std::string> tgt_supertags;

  /// Describes the first alignment problem, or returns nullopt when all
  /// annotations line up with their words.
  std::optional<std::string> alignment_problem() const;
};

struct InterleavedTarget {
  std::vector<std::string> tokens;
  std::vector<bool> is_tag;
  std::size_t word_count = 0;
};

enum class TargetMode { plain, interleaved };

/// B/I/E marks for multi-unit words, O for single-unit words.
std::vector<std::string> iob_tags(std::span<const std::vector<std::string>> subunits_per_word);

/// Emits each word's supertag once, followed by the word's BPE subunits.
InterleavedTarget interleave_target(std::span<const std::string> tgt_words,
                                    std::span<const std::string> tgt_supertags,
                                    const MergeTable& merges);

/// Removes every tag-partition id, keeping the order of the rest.
std::vector<int> strip_tags(std::span<const int> ids, const Vocabulary& vocab);
std::vector<std::string> strip_tags(const InterleavedTarget& target);

/// Copies each word's feature onto every one of its subunits.
std::vector<std::string> replicate_source_features(
    std::span<const std::string> features_per_word,
    std::span<const std::vector<std::string>> subunits_per_word);

/// A pair after BPE: the views every strategy draws from.
struct SegmentedPair {
  std::vector<std::string> src_units;
  /// Feature name -> one label per source subunit (includes "iob" when requested).
  std::map<std::string, std::vector<std::string>> src_features;
  std::vector<std::string> tgt_units;
  std::vector<std::string> tgt_tags;
  InterleavedTarget interleaved;
  std::size_t src_words = 0;
  std::size_t tgt_words = 0;

  bool has_tags() const { return !tgt_tags.empty(); }
  std::size_t target_length(TargetMode mode) const {
    return mode == TargetMode::interleaved ? interleaved.tokens.size() : tgt_units.size();
  }
};

SegmentedPair segment_pair(const AnnotatedSentencePair& pair, const MergeTable& merges,
                           bool with_iob);

struct VocabularyCaps {
  std::size_t source = 85000;
  std::size_t target = 85000;
  std::size_t tags = 500;
  std::size_t features = 500;

  bool operator==(const VocabularyCaps&) const = default;
};

struct Vocabularies {
  Vocabulary source;
  std::map<std::string, Vocabulary> source_features;
  /// Words only in plain mode; words plus the tag partition in interleaved mode.
  Vocabulary target;
  /// Tag-only vocabulary (used by the multitask tag decoder).
  Vocabulary tags;
};

/// Frequency-sorted truncation to the caps; ties broken by token string.
Vocabularies build_vocabularies(std::span<const SegmentedPair> corpus, TargetMode mode,
                                const VocabularyCaps& caps);

struct LengthLimits {
  std::size_t source = 50;
  std::size_t target = 50;
};

struct FilterResult {
  std::vector<SegmentedPair> kept;
  std::vector<std::size_t> kept_indices;
  std::size_t dropped = 0;
};

/// Keeps pairs whose source and model-facing target are within the limits (inclusive).
FilterResult filter_corpus(std::span<const SegmentedPair> pairs, const LengthLimits& limits,
                           TargetMode mode);

// ---------------------------------------------------------------------------
// Plain-text corpus files

std::vector<std::string> split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, std::span<const std::string> lines);

struct CorpusFiles {
  std::string source;
  std::string target;
  std::string target_tags;  // may be empty
  std::map<std::string, std::string> source_features;
};

struct Misalignment {
  std::size_t line = 0;  // 1-based
  std::string problem;
};

struct LoadedCorpus {
  std::vector<AnnotatedSentencePair> pairs;
  std::vector<std::size_t> lines;  // 1-based origin line of each pair
  std::vector<Misalignment> misaligned;
};

/// Reads a parallel corpus with optional annotations. Files with differing
/// line counts are an error; individual misaligned or unannotated sentences
/// are left out and reported in `misaligned`.
LoadedCorpus load_corpus(const CorpusFiles& files, bool load_target_tags);

}  // namespace snmt
