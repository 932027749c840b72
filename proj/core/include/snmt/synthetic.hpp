#pragma once

// A bracket language for end-to-end checks. Sources mix letters with nested
// () and [] groups; the translation maps each letter through rot13 and copies
// brackets. Every target token carries a depth tag: W<d> for letters, L<d>
// for an opening bracket at depth d and R<d> for its closing partner.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "snmt/corpus.hpp"

namespace snmt {

struct SyntheticOptions {
  std::size_t train = 2000;
  std::size_t dev = 200;
  std::size_t test = 200;
  std::size_t min_length = 3;
  std::size_t max_length = 12;
  std::size_t max_depth = 3;
  double open_probability = 0.2;
  double close_probability = 0.3;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<AnnotatedSentencePair> train;
  std::vector<AnnotatedSentencePair> dev;
  std::vector<AnnotatedSentencePair> test;
};

/// All 30 source symbols: a-z, then ( ) [ ].
std::vector<std::string> synthetic_alphabet();

std::vector<std::string> synthetic_sentence(std::mt19937_64& rng, const SyntheticOptions& options);
std::vector<std::string> synthetic_translation(const std::vector<std::string>& source);
/// The tag oracle; defined on any token sequence (unbalanced closers stay at depth 0).
std::vector<std::string> synthetic_tags(const std::vector<std::string>& target);

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

/// Writes <split>.src, <split>.tgt and <split>.tags under dir.
void write_synthetic(const SyntheticCorpus& corpus, const std::string& dir);

}  // namespace snmt
