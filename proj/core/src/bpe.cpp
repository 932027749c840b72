#include "snmt/bpe.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace snmt {

MergeTable::MergeTable(std::vector<Pair> merges) {
  for (auto& m : merges) push_back(std::move(m));
}

void MergeTable::push_back(Pair merge) {
  if (ranks_.count(merge)) throw std::invalid_argument("merge table: duplicate pair '" + merge.first + " " + merge.second + "'");
  ranks_.emplace(merge, static_cast<long>(merges_.size()));
  merges_.push_back(std::move(merge));
}

long MergeTable::rank(const std::string& left, const std::string& right) const {
  auto it = ranks_.find(Pair{left, right});
  return it == ranks_.end() ? -1 : it->second;
}

void MergeTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write merge table: " + path);
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

MergeTable MergeTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read merge table: " + path);
  MergeTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string l, r, extra;
    if (!(fields >> l >> r) || (fields >> extra))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 'left right'");
    table.push_back({l, r});
  }
  return table;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> symbols = utf8_chars(word);
  if (!symbols.empty()) symbols.back() += kEndOfWord;
  return symbols;
}

void merge_pair(std::vector<std::string>& symbols, const std::string& left, const std::string& right) {
  std::vector<std::string> next;
  next.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      next.push_back(left + right);
      ++i;
    } else {
      next.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(next);
}

}  // namespace

MergeTable learn_bpe(std::span<const std::string> tokens, std::size_t num_merges,
                     std::size_t min_frequency) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : tokens)
    if (!t.empty()) ++counts[t];

  struct Word {
    std::vector<std::string> symbols;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(counts.size());
  for (const auto& [w, c] : counts) words.push_back({initial_symbols(w), c});

  MergeTable table;
  for (std::size_t step = 0; step < num_merges; ++step) {
    std::map<MergeTable::Pair, std::size_t> stats;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
        stats[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
    if (stats.empty()) break;

    // std::map iterates in lexicographic pair order, so the first maximum wins ties.
    auto best = stats.begin();
    for (auto it = stats.begin(); it != stats.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->second < min_frequency) break;

    const MergeTable::Pair pair = best->first;
    for (auto& w : words) merge_pair(w.symbols, pair.first, pair.second);
    table.push_back(pair);
  }
  return table;
}

std::vector<std::string> apply_bpe(std::string_view word, const MergeTable& merges) {
  if (word.empty()) throw std::invalid_argument("apply_bpe: empty word");
  std::vector<std::string> symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    long best_rank = std::numeric_limits<long>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const long r = merges.rank(symbols[i], symbols[i + 1]);
      if (r >= 0 && r < best_rank) {
        best_rank = r;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<long>::max()) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    merge_pair(symbols, left, right);
  }

  std::string& last = symbols.back();
  last.erase(last.size() - kEndOfWord.size());
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i) symbols[i] += kContinuation;
  return symbols;
}

std::vector<std::vector<std::string>> apply_bpe_words(std::span<const std::string> words,
                                                      const MergeTable& merges) {
  std::unordered_map<std::string, std::vector<std::string>> cache;
  std::vector<std::vector<std::string>> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, apply_bpe(w, merges)).first;
    out.push_back(it->second);
  }
  return out;
}

std::string join_word(std::span<const std::string> units) {
  std::string word;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string& u = units[i];
    if (i + 1 < units.size() && !u.empty() && u.back() == kContinuation)
      word.append(u, 0, u.size() - 1);
    else
      word += u;
  }
  return word;
}

std::vector<std::string> join_subunits(std::span<const std::string> units) {
  std::vector<std::string> words;
  std::string pending;
  bool open = false;
  for (const auto& u : units) {
    if (!u.empty() && u.back() == kContinuation && u.size() > 1) {
      pending.append(u, 0, u.size() - 1);
      open = true;
    } else {
      pending += u;
      words.push_back(std::move(pending));
      pending.clear();
      open = false;
    }
  }
  if (open) words.push_back(std::move(pending));
  return words;
}

}  // namespace snmt
