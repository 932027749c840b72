#include "snmt/synthetic.hpp"

#include <filesystem>
#include <stdexcept>

namespace snmt {

namespace {

bool is_open(const std::string& t) { return t == "(" || t == "["; }
bool is_close(const std::string& t) { return t == ")" || t == "]"; }

AnnotatedSentencePair make_pair(std::vector<std::string> source) {
  AnnotatedSentencePair p;
  p.tgt_words = synthetic_translation(source);
  p.tgt_supertags = synthetic_tags(p.tgt_words);
  p.src_words = std::move(source);
  return p;
}

}  // namespace

std::vector<std::string> synthetic_alphabet() {
  std::vector<std::string> out;
  for (char c = 'a'; c <= 'z'; ++c) out.emplace_back(1, c);
  for (const char* b : {"(", ")", "[", "]"}) out.emplace_back(b);
  return out;
}

std::vector<std::string> synthetic_sentence(std::mt19937_64& rng, const SyntheticOptions& o) {
  if (o.min_length == 0 || o.min_length > o.max_length)
    throw std::invalid_argument("synthetic: bad length range");
  std::uniform_int_distribution<std::size_t> length(o.min_length, o.max_length);
  std::uniform_int_distribution<int> letter(0, 25);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const std::size_t n = length(rng);
  std::vector<std::string> out;
  std::vector<char> stack;          // closing symbols still owed
  std::vector<bool> has_content;    // per open group
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t remaining = n - i;
    if (!stack.empty() && remaining == stack.size()) {
      out.emplace_back(1, stack.back());
      stack.pop_back();
      has_content.pop_back();
      continue;
    }
    if (stack.size() < o.max_depth && remaining >= stack.size() + 3 && coin(rng) < o.open_probability) {
      const bool round = coin(rng) < 0.5;
      out.emplace_back(round ? "(" : "[");
      if (!has_content.empty()) has_content.back() = true;
      stack.push_back(round ? ')' : ']');
      has_content.push_back(false);
      continue;
    }
    if (!stack.empty() && has_content.back() && coin(rng) < o.close_probability) {
      out.emplace_back(1, stack.back());
      stack.pop_back();
      has_content.pop_back();
      if (!has_content.empty()) has_content.back() = true;
      continue;
    }
    out.emplace_back(1, static_cast<char>('a' + letter(rng)));
    if (!has_content.empty()) has_content.back() = true;
  }
  return out;
}

std::vector<std::string> synthetic_translation(const std::vector<std::string>& source) {
  std::vector<std::string> out;
  out.reserve(source.size());
  for (const auto& t : source) {
    if (t.size() == 1 && t[0] >= 'a' && t[0] <= 'z')
      out.emplace_back(1, static_cast<char>('a' + (t[0] - 'a' + 13) % 26));
    else
      out.push_back(t);
  }
  return out;
}

std::vector<std::string> synthetic_tags(const std::vector<std::string>& target) {
  std::vector<std::string> out;
  out.reserve(target.size());
  std::size_t depth = 0;
  for (const auto& t : target) {
    if (is_open(t)) {
      out.push_back("L" + std::to_string(depth));
      ++depth;
    } else if (is_close(t)) {
      if (depth > 0) --depth;
      out.push_back("R" + std::to_string(depth));
    } else {
      out.push_back("W" + std::to_string(depth));
    }
  }
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& options) {
  std::mt19937_64 rng(options.seed);
  SyntheticCorpus c;
  auto fill = [&](std::vector<AnnotatedSentencePair>& split, std::size_t n) {
    split.reserve(n);
    for (std::size_t i = 0; i < n; ++i) split.push_back(make_pair(synthetic_sentence(rng, options)));
  };
  fill(c.train, options.train);
  fill(c.dev, options.dev);
  fill(c.test, options.test);
  return c;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto write_split = [&](const std::string& name, const std::vector<AnnotatedSentencePair>& pairs) {
    std::vector<std::string> src, tgt, tags;
    for (const auto& p : pairs) {
      src.push_back(join_tokens(p.src_words));
      tgt.push_back(join_tokens(p.tgt_words));
      tags.push_back(join_tokens(p.tgt_supertags));
    }
    const std::filesystem::path base(dir);
    write_lines((base / (name + ".src")).string(), src);
    write_lines((base / (name + ".tgt")).string(), tgt);
    write_lines((base / (name + ".tags")).string(), tags);
  };
  write_split("train", corpus.train);
  write_split("dev", corpus.dev);
  write_split("test", corpus.test);
}

}  // namespace snmt
