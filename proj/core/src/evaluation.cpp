#include "snmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "snmt/corpus.hpp"

namespace snmt {

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_length += other.hyp_length;
  ref_length += other.ref_length;
  return *this;
}

BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats s;
  s.hyp_length = hyp.size();
  s.ref_length = ref.size();
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<std::string>(ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + n))];
    std::map<std::vector<std::string>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[std::vector<std::string>(hyp.begin() + static_cast<long>(i), hyp.begin() + static_cast<long>(i + n))];
    std::size_t clipped = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    s.matches[n - 1] = clipped;
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

BleuScore bleu_from_stats(const BleuStats& stats) {
  BleuScore b;
  b.hyp_length = stats.hyp_length;
  b.ref_length = stats.ref_length;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    b.precisions[n] = stats.totals[n] == 0 ? 0.0
                                           : static_cast<double>(stats.matches[n]) /
                                                 static_cast<double>(stats.totals[n]);
    if (b.precisions[n] <= 0.0) zero = true;
    else log_sum += std::log(b.precisions[n]);
  }
  if (stats.hyp_length == 0) {
    b.brevity_penalty = 0.0;
    return b;
  }
  const double ratio = static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length);
  b.brevity_penalty = stats.hyp_length >= stats.ref_length ? 1.0 : std::exp(1.0 - ratio);
  if (!zero) b.score = 100.0 * b.brevity_penalty * std::exp(log_sum / static_cast<double>(kBleuOrder));
  return b;
}

BleuScore corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("corpus_bleu: " + std::to_string(hypotheses.size()) +
                                " hypotheses for " + std::to_string(references.size()) + " references");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) total += sentence_stats(hypotheses[i], references[i]);
  return bleu_from_stats(total);
}

std::string format_bleu(const BleuScore& b) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "BLEU = " << b.score << ", " << std::setprecision(1);
  for (std::size_t n = 0; n < kBleuOrder; ++n) os << (n ? "/" : "") << 100.0 * b.precisions[n];
  const double ratio = b.ref_length == 0 ? 0.0 : static_cast<double>(b.hyp_length) / static_cast<double>(b.ref_length);
  os << std::setprecision(3) << " (BP=" << b.brevity_penalty << ", ratio=" << ratio << ", hyp_len=" << b.hyp_length
     << ", ref_len=" << b.ref_length << ")";
  return os.str();
}

SignificanceResult bootstrap_significance(std::span<const Sentence> hyp_a,
                                          std::span<const Sentence> hyp_b,
                                          std::span<const Sentence> references,
                                          std::size_t resamples, std::uint64_t seed) {
  if (hyp_a.size() != references.size() || hyp_b.size() != references.size())
    throw std::invalid_argument("bootstrap_significance: corpora are not aligned");
  if (references.empty()) throw std::invalid_argument("bootstrap_significance: empty corpus");
  if (resamples == 0) throw std::invalid_argument("bootstrap_significance: resamples must be positive");

  const std::size_t n = references.size();
  std::vector<BleuStats> stats_a, stats_b;
  stats_a.reserve(n);
  stats_b.reserve(n);
  BleuStats full_a, full_b;
  for (std::size_t i = 0; i < n; ++i) {
    stats_a.push_back(sentence_stats(hyp_a[i], references[i]));
    stats_b.push_back(sentence_stats(hyp_b[i], references[i]));
    full_a += stats_a.back();
    full_b += stats_b.back();
  }

  SignificanceResult res;
  res.resamples = resamples;
  res.bleu_a = bleu_from_stats(full_a).score;
  res.bleu_b = bleu_from_stats(full_b).score;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  double delta_sum = 0.0;
  for (std::size_t r = 0; r < resamples; ++r) {
    BleuStats a, b;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = pick(rng);
      a += stats_a[i];
      b += stats_b[i];
    }
    const double delta = bleu_from_stats(b).score - bleu_from_stats(a).score;
    if (delta > 0.0) ++res.wins;
    else if (delta == 0.0) ++res.ties;
    delta_sum += delta;
    if (r == 0 || delta < res.min_delta) res.min_delta = delta;
    if (r == 0 || delta > res.max_delta) res.max_delta = delta;
  }
  res.mean_delta = delta_sum / static_cast<double>(resamples);
  res.p_value = static_cast<double>(resamples - res.wins) / static_cast<double>(resamples);
  return res;
}

// ---------------------------------------------------------------------------
// Constructs

bool ConstructRule::matches(const std::string& tag) const {
  return exact ? tag == pattern : tag.find(pattern) != std::string::npos;
}

ConstructRules ConstructRules::parse(std::span<const std::string> lines) {
  std::vector<ConstructRule> rules;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw std::invalid_argument("construct rules line " + std::to_string(i + 1) +
                                  ": expected 'subset<TAB>pattern'");
    ConstructRule r;
    r.subset = line.substr(0, tab);
    r.pattern = line.substr(tab + 1);
    if (r.pattern[0] == '=') {
      r.exact = true;
      r.pattern.erase(0, 1);
    }
    if (r.pattern.empty())
      throw std::invalid_argument("construct rules line " + std::to_string(i + 1) + ": empty pattern");
    rules.push_back(std::move(r));
  }
  return ConstructRules(std::move(rules));
}

ConstructRules ConstructRules::load(const std::string& path) { return parse(read_lines(path)); }

const std::vector<std::string>& default_construct_rule_lines() {
  static const std::vector<std::string> lines = {
      "# subset<TAB>pattern; a leading '=' means exact match, otherwise substring",
      "conj\t=conj",
      "control\t/(S[to]\\NP)",
      "pp\t/PP",
      "pp\tPP/NP",
      "questions\t[wq]",
      "questions\t[q]",
      "subordinate\t=(NP\\NP)/(S/NP)",
      "subordinate\t=(NP\\NP)/(S[dcl]\\NP)",
      "subordinate\t/S[em]",
      "subordinate\tS[em]/S[dcl]",
  };
  return lines;
}

ConstructRules ConstructRules::defaults() { return parse(default_construct_rule_lines()); }

std::vector<std::string> ConstructRules::subsets() const {
  std::vector<std::string> names;
  for (const auto& r : rules_)
    if (std::find(names.begin(), names.end(), r.subset) == names.end()) names.push_back(r.subset);
  return names;
}

std::vector<std::set<std::string>> classify_constructs(std::span<const Sentence> reference_tags,
                                                       const ConstructRules& rules) {
  std::vector<std::set<std::string>> out(reference_tags.size());
  for (std::size_t i = 0; i < reference_tags.size(); ++i)
    for (const auto& tag : reference_tags[i])
      for (const auto& r : rules.rules())
        if (r.matches(tag)) out[i].insert(r.subset);
  return out;
}

// ---------------------------------------------------------------------------
// Length buckets

const std::array<std::string, kLengthBucketCount>& length_bucket_names() {
  static const std::array<std::string, kLengthBucketCount> names = {"<15", "15-25", "25-35", ">35"};
  return names;
}

std::size_t length_bucket(std::size_t n) {
  if (n == 0) throw std::invalid_argument("length_bucket: length must be at least 1");
  if (n < 15) return 0;
  if (n <= 25) return 1;
  if (n <= 35) return 2;
  return 3;
}

std::vector<std::size_t> length_buckets(std::span<const std::size_t> source_lengths) {
  std::vector<std::size_t> out;
  out.reserve(source_lengths.size());
  for (std::size_t n : source_lengths) out.push_back(length_bucket(n));
  return out;
}

// ---------------------------------------------------------------------------
// Tag accuracy

TagAccuracy tag_accuracy(std::span<const Sentence> predicted, std::span<const Sentence> reference) {
  if (predicted.size() != reference.size())
    throw std::invalid_argument("tag_accuracy: sentence counts differ");
  TagAccuracy acc;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != reference[i].size()) continue;
    ++acc.matched_sentences;
    acc.tokens += reference[i].size();
    for (std::size_t k = 0; k < reference[i].size(); ++k)
      if (predicted[i][k] == reference[i][k]) ++acc.correct;
  }
  if (!predicted.empty())
    acc.match_rate = static_cast<double>(acc.matched_sentences) / static_cast<double>(predicted.size());
  if (acc.matched_sentences > 0)
    acc.accuracy = acc.tokens == 0 ? 100.0
                                   : 100.0 * static_cast<double>(acc.correct) / static_cast<double>(acc.tokens);
  return acc;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<SubsetSpec> construct_subsets(std::span<const Sentence> reference_tags,
                                          const ConstructRules& rules) {
  const auto memberships = classify_constructs(reference_tags, rules);
  std::vector<SubsetSpec> out;
  for (const auto& name : rules.subsets()) {
    SubsetSpec s{name, {}};
    for (std::size_t i = 0; i < memberships.size(); ++i)
      if (memberships[i].count(name)) s.members.push_back(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SubsetSpec> length_subsets(std::span<const std::size_t> source_lengths) {
  std::vector<SubsetSpec> out;
  for (const auto& name : length_bucket_names()) out.push_back({name, {}});
  for (std::size_t i = 0; i < source_lengths.size(); ++i)
    out[length_bucket(source_lengths[i])].members.push_back(i);
  return out;
}

EvaluationReport breakdown_report(std::span<const Sentence> system, std::span<const Sentence> baseline,
                                  std::span<const Sentence> references,
                                  std::span<const SubsetSpec> subsets) {
  if (system.size() != references.size() || baseline.size() != references.size())
    throw std::invalid_argument("breakdown_report: corpora are not aligned");
  EvaluationReport report;
  report.corpus_system = corpus_bleu(system, references);
  report.corpus_baseline = corpus_bleu(baseline, references);
  report.sentences = references.size();

  for (const auto& subset : subsets) {
    BleuStats sys, base;
    for (std::size_t i : subset.members) {
      if (i >= references.size()) throw std::out_of_range("breakdown_report: subset index out of range");
      sys += sentence_stats(system[i], references[i]);
      base += sentence_stats(baseline[i], references[i]);
    }
    ReportRow row;
    row.name = subset.name;
    row.count = subset.members.size();
    row.bleu_system = bleu_from_stats(sys).score;
    row.bleu_baseline = bleu_from_stats(base).score;
    row.delta = row.bleu_system - row.bleu_baseline;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "corpus BLEU  system " << corpus_system.score << "  baseline " << corpus_baseline.score
     << "  delta " << corpus_system.score - corpus_baseline.score << '\n';
  if (significance)
    os << "bootstrap    p = " << std::setprecision(4) << significance->p_value << " over "
       << significance->resamples << " resamples" << std::setprecision(2) << '\n';
  if (tags) {
    os << "tag accuracy ";
    if (tags->accuracy) os << *tags->accuracy;
    else os << "n/a";
    os << "  match rate " << std::setprecision(4) << tags->match_rate << std::setprecision(2) << '\n';
  }
  os << '\n'
     << std::left << std::setw(24) << "subset" << std::right << std::setw(8) << "count" << std::setw(10)
     << "system" << std::setw(10) << "baseline" << std::setw(9) << "delta" << '\n';
  for (const auto& r : rows)
    os << std::left << std::setw(24) << r.name << std::right << std::setw(8) << r.count << std::setw(10)
       << r.bleu_system << std::setw(10) << r.bleu_baseline << std::setw(9) << r.delta << '\n';
  return os.str();
}

std::string EvaluationReport::to_tsv() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "subset\tcount\tbleu_system\tbleu_baseline\tdelta\n";
  os << "ALL\t" << sentences << '\t' << corpus_system.score << '\t' << corpus_baseline.score
     << '\t' << corpus_system.score - corpus_baseline.score << '\n';
  for (const auto& r : rows)
    os << r.name << '\t' << r.count << '\t' << r.bleu_system << '\t' << r.bleu_baseline << '\t' << r.delta << '\n';
  if (significance) os << "#p_value\t" << significance->p_value << '\t' << significance->resamples << '\n';
  if (tags)
    os << "#tag_accuracy\t" << (tags->accuracy ? std::to_string(*tags->accuracy) : std::string("nan")) << '\t'
       << tags->match_rate << '\n';
  return os.str();
}

}  // namespace snmt
