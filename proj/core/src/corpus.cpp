#include "snmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace snmt {

std::optional<std::string> AnnotatedSentencePair::alignment_problem() const {
  for (const auto& [name, labels] : src_features)
    if (labels.size() != src_words.size())
      return "source feature '" + name + "' has " + std::to_string(labels.size()) +
             " labels for " + std::to_string(src_words.size()) + " words";
  if (!tgt_supertags.empty() && tgt_supertags.size() != tgt_words.size())
    return std::to_string(tgt_supertags.size()) + " supertags for " +
           std::to_string(tgt_words.size()) + " target words";
  return std::nullopt;
}

std::vector<std::string> iob_tags(std::span<const std::vector<std::string>> subunits_per_word) {
  std::vector<std::string> out;
  for (const auto& units : subunits_per_word) {
    if (units.empty()) throw std::invalid_argument("iob_tags: word without subunits");
    if (units.size() == 1) {
      out.emplace_back("O");
      continue;
    }
    out.emplace_back("B");
    for (std::size_t i = 1; i + 1 < units.size(); ++i) out.emplace_back("I");
    out.emplace_back("E");
  }
  return out;
}

InterleavedTarget interleave_target(std::span<const std::string> tgt_words,
                                    std::span<const std::string> tgt_supertags,
                                    const MergeTable& merges) {
  if (tgt_words.size() != tgt_supertags.size())
    throw std::invalid_argument("interleave_target: " + std::to_string(tgt_supertags.size()) +
                                " supertags for " + std::to_string(tgt_words.size()) + " words");
  InterleavedTarget out;
  out.word_count = tgt_words.size();
  for (std::size_t i = 0; i < tgt_words.size(); ++i) {
    out.tokens.push_back(tgt_supertags[i]);
    out.is_tag.push_back(true);
    for (auto& unit : apply_bpe(tgt_words[i], merges)) {
      out.tokens.push_back(std::move(unit));
      out.is_tag.push_back(false);
    }
  }
  return out;
}

std::vector<int> strip_tags(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids)
    if (!vocab.is_tag(id)) out.push_back(id);
  return out;
}

std::vector<std::string> strip_tags(const InterleavedTarget& target) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < target.tokens.size(); ++i)
    if (!target.is_tag[i]) out.push_back(target.tokens[i]);
  return out;
}

std::vector<std::string> replicate_source_features(
    std::span<const std::string> features_per_word,
    std::span<const std::vector<std::string>> subunits_per_word) {
  if (features_per_word.size() != subunits_per_word.size())
    throw std::invalid_argument("replicate_source_features: " +
                                std::to_string(features_per_word.size()) + " labels for " +
                                std::to_string(subunits_per_word.size()) + " words");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < features_per_word.size(); ++i)
    out.insert(out.end(), subunits_per_word[i].size(), features_per_word[i]);
  return out;
}

SegmentedPair segment_pair(const AnnotatedSentencePair& pair, const MergeTable& merges,
                           bool with_iob) {
  if (auto problem = pair.alignment_problem()) throw std::invalid_argument(*problem);
  SegmentedPair out;
  out.src_words = pair.src_words.size();
  out.tgt_words = pair.tgt_words.size();

  const auto src_split = apply_bpe_words(pair.src_words, merges);
  for (const auto& units : src_split) out.src_units.insert(out.src_units.end(), units.begin(), units.end());
  for (const auto& [name, labels] : pair.src_features)
    out.src_features[name] = replicate_source_features(labels, src_split);
  if (with_iob) out.src_features[kIobFeature] = iob_tags(src_split);

  for (const auto& units : apply_bpe_words(pair.tgt_words, merges))
    out.tgt_units.insert(out.tgt_units.end(), units.begin(), units.end());
  if (!pair.tgt_supertags.empty()) {
    out.tgt_tags = pair.tgt_supertags;
    out.interleaved = interleave_target(pair.tgt_words, pair.tgt_supertags, merges);
  }
  return out;
}

namespace {

class Counter {
 public:
  void add(const std::string& token) { ++counts_[token]; }
  template <typename Range>
  void add_all(const Range& tokens) {
    for (const auto& t : tokens) add(t);
  }

  /// Tokens sorted by descending frequency, ties by token string.
  std::vector<std::string> top(std::size_t cap) const {
    std::vector<std::pair<std::string, std::size_t>> items(counts_.begin(), counts_.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (items.size() > cap) items.resize(cap);
    std::vector<std::string> out;
    out.reserve(items.size());
    for (auto& [t, c] : items) out.push_back(std::move(t));
    return out;
  }

 private:
  std::unordered_map<std::string, std::size_t> counts_;
};

bool is_reserved_string(const std::string& t) {
  return t == Vocabulary::kPadToken || t == Vocabulary::kUnkToken || t == Vocabulary::kEosToken;
}

}  // namespace

Vocabularies build_vocabularies(std::span<const SegmentedPair> corpus, TargetMode mode,
                                const VocabularyCaps& caps) {
  Counter src, tgt, tags;
  std::map<std::string, Counter> features;
  for (const auto& p : corpus) {
    src.add_all(p.src_units);
    tgt.add_all(p.tgt_units);
    tags.add_all(p.tgt_tags);
    for (const auto& [name, labels] : p.src_features) features[name].add_all(labels);
  }

  Vocabularies v;
  for (const auto& t : src.top(caps.source))
    if (!is_reserved_string(t)) v.source.add(t);
  for (const auto& [name, counter] : features) {
    Vocabulary& fv = v.source_features[name];
    for (const auto& t : counter.top(caps.features))
      if (!is_reserved_string(t)) fv.add(t);
  }
  for (const auto& t : tgt.top(caps.target))
    if (!is_reserved_string(t)) v.target.add(t);

  const auto tag_types = tags.top(caps.tags);
  if (!tag_types.empty()) {
    for (const auto& t : tag_types) v.tags.add(t, true);
    v.tags.add(Vocabulary::kUnkTagToken, true);
    if (mode == TargetMode::interleaved) {
      for (const auto& t : tag_types) v.target.add(t, true);
      v.target.add(Vocabulary::kUnkTagToken, true);
    }
  }
  return v;
}

FilterResult filter_corpus(std::span<const SegmentedPair> pairs, const LengthLimits& limits,
                           TargetMode mode) {
  if (limits.source == 0 || limits.target == 0)
    throw std::invalid_argument("filter_corpus: limits must be positive");
  FilterResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.src_units.size() <= limits.source && p.target_length(mode) <= limits.target) {
      out.kept.push_back(p);
      out.kept_indices.push_back(i);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (i < line.size()) {
    while (i < line.size() && space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

LoadedCorpus load_corpus(const CorpusFiles& files, bool load_target_tags) {
  const auto src = read_lines(files.source);
  const auto tgt = read_lines(files.target);
  if (src.size() != tgt.size())
    throw std::runtime_error(files.source + " has " + std::to_string(src.size()) + " lines but " +
                             files.target + " has " + std::to_string(tgt.size()));

  std::vector<std::string> tags;
  if (load_target_tags) {
    if (files.target_tags.empty()) throw std::runtime_error("target tag file required but not configured");
    tags = read_lines(files.target_tags);
    if (tags.size() != tgt.size())
      throw std::runtime_error(files.target_tags + " has " + std::to_string(tags.size()) +
                               " lines but " + files.target + " has " + std::to_string(tgt.size()));
  }

  std::map<std::string, std::vector<std::string>> feature_lines;
  for (const auto& [name, path] : files.source_features) {
    auto lines = read_lines(path);
    if (lines.size() != src.size())
      throw std::runtime_error(path + " has " + std::to_string(lines.size()) + " lines but " +
                               files.source + " has " + std::to_string(src.size()));
    feature_lines.emplace(name, std::move(lines));
  }

  LoadedCorpus out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    AnnotatedSentencePair p;
    p.src_words = split_tokens(src[i]);
    p.tgt_words = split_tokens(tgt[i]);
    for (const auto& [name, lines] : feature_lines) p.src_features[name] = split_tokens(lines[i]);
    if (load_target_tags) {
      p.tgt_supertags = split_tokens(tags[i]);
      if (p.tgt_supertags.empty() && !p.tgt_words.empty()) {
        out.misaligned.push_back({i + 1, "missing supertag annotation"});
        continue;
      }
    }
    if (p.src_words.empty() || p.tgt_words.empty()) {
      out.misaligned.push_back({i + 1, "empty sentence"});
      continue;
    }
    if (auto problem = p.alignment_problem()) {
      out.misaligned.push_back({i + 1, *problem});
      continue;
    }
    out.pairs.push_back(std::move(p));
    out.lines.push_back(i + 1);
  }
  return out;
}

}  // namespace snmt
