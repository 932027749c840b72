#pragma once

// Byte-pair-encoding subword segmentation.
//
// Words are split into characters with an end-of-word sentinel attached to
// the last one. Non-final subunits are rendered with a trailing "+" so that a
// segmented word reads "Net+ an+ yahu".

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace snmt {

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr char kContinuation = '+';

class MergeTable {
 public:
  using Pair = std::pair<std::string, std::string>;

  MergeTable() = default;
  explicit MergeTable(std::vector<Pair> merges);

  void push_back(Pair merge);
  std::size_t size() const { return merges_.size(); }
  bool empty() const { return merges_.empty(); }
  const std::vector<Pair>& merges() const { return merges_; }

  /// Priority of a pair (lower merges first), or -1 if absent.
  long rank(const std::string& left, const std::string& right) const;

  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);

 private:
  std::vector<Pair> merges_;
  std::map<Pair, long> ranks_;
};

/// Splits a UTF-8 string into code points.
std::vector<std::string> utf8_chars(std::string_view word);

/// Learns up to num_merges merges from a token stream. At each step the most
/// frequent adjacent pair is merged; ties go to the lexicographically smallest
/// pair. Learning stops early when no pair reaches min_frequency.
MergeTable learn_bpe(std::span<const std::string> tokens, std::size_t num_merges,
                     std::size_t min_frequency = 2);

/// Segments one word. join_word() of the result gives the word back.
std::vector<std::string> apply_bpe(std::string_view word, const MergeTable& merges);

/// Segments each word of a sentence, keeping the per-word grouping.
std::vector<std::vector<std::string>> apply_bpe_words(std::span<const std::string> words,
                                                      const MergeTable& merges);

/// Rejoins the subunits of a single word (drops the marker on all but the last unit).
std::string join_word(std::span<const std::string> units);

/// Rejoins a stream of subunits into words: a unit ending in "+" continues
/// into the next one.
std::vector<std::string> join_subunits(std::span<const std::string> units);

}  // namespace snmt
