#pragma once

// Shared fixtures: toy models and batches, the annotated example sentence,
// and a scalar BLEU reference implementation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snmt/bpe.hpp"
#include "snmt/corpus.hpp"
#include "snmt/model.hpp"
#include "snmt/strategies.hpp"
#include "snmt/tensor.hpp"

namespace snmt::test {

// ---------------------------------------------------------------------------
// The annotated example sentence

inline const std::vector<std::string> kExampleWords = {"Obama", "receives", "Netanyahu", "in",
                                                       "the",   "capital",  "of",        "USA"};
inline const std::vector<std::string> kExampleTags = {
    "NP", "((S[dcl]\\NP)/PP)/NP", "NP", "PP/NP", "NP/N", "N", "(NP\\NP)/NP", "NP"};
inline const std::string kExampleSentence = "Obama receives Netanyahu in the capital of USA";
inline const std::string kExampleBpe = "Obama receives Net+ an+ yahu in the capital of USA";
inline const std::string kExampleIob = "O O B I E O O O O O";
inline const std::string kExampleCcgPerUnit =
    "NP ((S[dcl]\\NP)/PP)/NP NP NP NP PP/NP NP/N N (NP\\NP)/NP NP";
inline const std::string kExampleInterleaved =
    "NP Obama ((S[dcl]\\NP)/PP)/NP receives NP Net+ an+ yahu PP/NP in NP/N the N capital "
    "(NP\\NP)/NP of NP USA";

/// Merges that fuse every example word except "Netanyahu", which ends as Net / an / yahu.
inline MergeTable example_merges() {
  std::vector<MergeTable::Pair> merges;
  std::set<MergeTable::Pair> seen;
  auto add = [&](const std::string& l, const std::string& r) {
    if (seen.insert({l, r}).second) merges.push_back({l, r});
  };
  add("N", "e");
  add("Ne", "t");
  add("a", "n");
  add("y", "a");
  add("h", std::string("u") + std::string(kEndOfWord));
  add("ya", std::string("hu") + std::string(kEndOfWord));
  for (const auto& word : kExampleWords) {
    if (word == "Netanyahu") continue;
    std::vector<std::string> chars = utf8_chars(word);
    chars.back() += std::string(kEndOfWord);
    std::string left = chars[0];
    for (std::size_t i = 1; i < chars.size(); ++i) {
      add(left, chars[i]);
      left += chars[i];
    }
  }
  return MergeTable(merges);
}

inline AnnotatedSentencePair example_pair() {
  AnnotatedSentencePair p;
  p.src_words = kExampleWords;
  p.src_features["ccg"] = kExampleTags;
  p.tgt_words = kExampleWords;
  p.tgt_supertags = kExampleTags;
  return p;
}

// ---------------------------------------------------------------------------
// Toy models

inline ModelConfig toy_config(std::size_t vocab, std::size_t hidden, Strategy mode = Strategy::baseline,
                              std::size_t tag_vocab = 0, std::size_t width = 8) {
  ModelConfig c;
  c.source.features.push_back({kWordFeature, vocab, width});
  c.hidden = hidden;
  c.attention = width;
  c.output_width = width;
  if (mode == Strategy::multitask) {
    c.decoders.push_back({kMultitaskWordDecoder, vocab, width});
    c.decoders.push_back({kMultitaskTagDecoder, tag_vocab, width});
  } else {
    c.decoders.push_back({kWordDecoder, vocab, width});
  }
  return c;
}

inline std::vector<int> random_ids(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> id(3, static_cast<int>(vocab) - 1);
  std::vector<int> out(len);
  for (int& v : out) v = id(rng);
  return out;
}

/// Random examples: sources of 2-4 ids, one EOS-terminated target per decoder.
inline std::vector<EncodedExample> random_examples(std::mt19937_64& rng, const ModelConfig& config,
                                                   std::size_t count) {
  std::uniform_int_distribution<std::size_t> src_len(2, 4), tgt_len(1, 4);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    EncodedExample ex;
    const std::size_t n = src_len(rng);
    for (const auto& f : config.source.features) ex.source[f.name] = random_ids(rng, n, f.vocab_size);
    for (const auto& d : config.decoders) {
      auto t = random_ids(rng, tgt_len(rng), d.vocab_size);
      t.push_back(2);
      ex.targets.push_back(std::move(t));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline ModelBatch random_batch(std::mt19937_64& rng, const ModelConfig& config, std::size_t count) {
  return collate(random_examples(rng, config, count));
}

/// Vocabularies over single-letter words a, b, ... and tags T0, T1, ...
inline Vocabularies toy_vocabs(std::size_t letters, std::size_t tags, TargetMode mode) {
  Vocabularies v;
  for (std::size_t i = 0; i < letters; ++i) {
    const std::string w(1, static_cast<char>('a' + i));
    v.source.add(w);
    v.target.add(w);
  }
  for (std::size_t i = 0; i < tags; ++i) {
    v.tags.add("T" + std::to_string(i), true);
    if (mode == TargetMode::interleaved) v.target.add("T" + std::to_string(i), true);
  }
  if (tags > 0) {
    v.tags.add(Vocabulary::kUnkTagToken, true);
    if (mode == TargetMode::interleaved) v.target.add(Vocabulary::kUnkTagToken, true);
  }
  return v;
}

/// Random tagged pairs over the toy alphabet, segmented with an empty merge table.
inline std::vector<SegmentedPair> toy_corpus(std::mt19937_64& rng, std::size_t count, std::size_t letters,
                                             std::size_t tags, std::size_t min_len = 2, std::size_t max_len = 4) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len), letter(0, letters - 1),
      tag(0, std::max<std::size_t>(tags, 1) - 1);
  std::vector<SegmentedPair> out;
  for (std::size_t i = 0; i < count; ++i) {
    AnnotatedSentencePair p;
    const std::size_t n = len(rng), m = len(rng);
    for (std::size_t k = 0; k < n; ++k) p.src_words.emplace_back(1, static_cast<char>('a' + letter(rng)));
    for (std::size_t k = 0; k < m; ++k) {
      p.tgt_words.emplace_back(1, static_cast<char>('a' + letter(rng)));
      if (tags > 0) p.tgt_supertags.push_back("T" + std::to_string(tag(rng)));
    }
    out.push_back(segment_pair(p, MergeTable{}, false));
  }
  return out;
}

inline ModelSizes toy_sizes(std::size_t hidden, std::size_t width = 8) {
  ModelSizes s;
  s.source_embedding = width;
  s.target_embedding = width;
  s.hidden = hidden;
  s.attention = width;
  s.output = width;
  return s;
}

/// Step for whole-model checks. Smaller steps are dominated by rounding
/// noise (about eps * |loss| / h) on gradient elements near 1e-8.
inline constexpr double kModelGradientStep = 1e-3;

/// Finite-difference check of a loss built from bound model parameters.
inline GradientCheckResult check_model_gradients(const ParameterSet& params,
                                                 const std::function<Var(BoundParameters&)>& loss,
                                                 double h = kModelGradientStep) {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [name, value] : params) {
    names.push_back(name);
    values.push_back(value);
  }
  auto f = [&](Tape& tape, std::span<const Var> vars) {
    BoundParameters bound(tape, params);
    for (std::size_t i = 0; i < vars.size(); ++i) bound.bind(names[i], vars[i]);
    return loss(bound);
  };
  return check_gradients(f, values, h);
}

inline ParameterSet gradients_of(const ParameterSet& params, const std::function<Var(BoundParameters&)>& loss) {
  Tape tape;
  BoundParameters bound(tape, params);
  Var l = loss(bound);
  return bound.gradients(backward(tape, l));
}

// ---------------------------------------------------------------------------
// Scalar BLEU reference

struct ReferenceBleu {
  double score = 0.0;
  double bp = 0.0;
  double precision[4] = {0, 0, 0, 0};
};

/// Corpus BLEU from string n-gram counts, computed without the library.
inline ReferenceBleu reference_bleu(const std::vector<std::vector<std::string>>& hyps,
                                    const std::vector<std::vector<std::string>>& refs) {
  double match[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double c = 0, r = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    c += static_cast<double>(hyps[s].size());
    r += static_cast<double>(refs[s].size());
    for (int n = 1; n <= 4; ++n) {
      std::map<std::string, int> hc, rc;
      auto count = [n](const std::vector<std::string>& toks, std::map<std::string, int>& into) {
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
          std::string key;
          for (int k = 0; k < n; ++k) key += toks[i + k] + '\x1f';
          ++into[key];
        }
      };
      count(hyps[s], hc);
      count(refs[s], rc);
      for (const auto& [g, k] : hc) {
        total[n - 1] += k;
        auto it = rc.find(g);
        if (it != rc.end()) match[n - 1] += std::min(k, it->second);
      }
    }
  }
  ReferenceBleu out;
  out.bp = c >= r ? 1.0 : (c == 0 ? 0.0 : std::exp(1.0 - r / c));
  double log_sum = 0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    out.precision[n] = total[n] > 0 ? match[n] / total[n] : 0.0;
    if (match[n] == 0) zero = true;
    else log_sum += std::log(out.precision[n]);
  }
  out.score = zero ? 0.0 : 100.0 * out.bp * std::exp(log_sum / 4.0);
  return out;
}

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("snmt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace snmt::test
