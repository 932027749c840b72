#pragma once

// Search over a trained model or an ensemble of checkpoints, and the
// post-processing that turns a decoded id stream into a translation.
//
// Ensembles combine models step by step: the log-probability of a token is
// the arithmetic mean of the members' log-probabilities.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snmt/checkpoint.hpp"
#include "snmt/model.hpp"
#include "snmt/vocabulary.hpp"

namespace snmt {

struct Hypothesis {
  std::vector<int> tokens;          // ends in EOS once finished
  double log_prob = 0.0;            // cumulative
  std::vector<double> step_log_probs;
  bool finished = false;

  /// Length-normalized score: log_prob / token count.
  double score() const;
};

/// A model to decode with: a layout, its parameters and which decoder to run.
struct ModelView {
  const ModelConfig* config = nullptr;
  const ParameterSet* params = nullptr;
  std::size_t decoder = 0;
};

enum class Combination { mean_log_prob };

/// Checkpoints decoded together. Members must agree on every vocabulary.
struct EnsembleSpec {
  std::vector<Checkpoint> members;
  Combination rule = Combination::mean_log_prob;
  std::size_t decoder = 0;

  /// Throws unless members share vocabulary hashes and decoder sizes.
  void validate() const;
  std::vector<ModelView> views() const;
};

EnsembleSpec load_ensemble(std::span<const std::string> paths, std::size_t decoder = 0);

struct SearchOptions {
  std::size_t beam = 5;
  std::size_t max_len = 100;
  /// Keep every beam's live prefixes per step (for inspection).
  bool record_trace = false;
};

struct SearchResult {
  Hypothesis best;
  std::vector<Hypothesis> finished;  // best first
  /// trace[j] holds the live prefixes after step j.
  std::vector<std::vector<std::vector<int>>> trace;
};

/// Decodes one sentence. `source` must hold a batch of one. Finished
/// hypotheses compete on score(); at max_len every live hypothesis is
/// closed with EOS.
SearchResult beam_search(const SourceBatch& source, std::span<const ModelView> models,
                         const SearchOptions& options);

/// Batched argmax decoding (validation). Ties go to the lower id. Outputs
/// end in EOS; sentences reaching max_len are closed with EOS.
std::vector<std::vector<int>> greedy_decode(const SourceBatch& source, std::span<const ModelView> models,
                                            std::size_t max_len);

/// Combined next-token log-probabilities for a batch of one source sentence
/// after each of the given prefixes (one row per prefix).
std::vector<std::vector<double>> next_log_probs(const SourceBatch& source, std::span<const ModelView> models,
                                                std::span<const std::vector<int>> prefixes);

/// Scores every sequence of at most max_len tokens that ends in EOS (the
/// other positions may be any non-EOS id) and returns the best by score().
/// Exponential; meant for toy vocabularies.
Hypothesis exhaustive_search(const SourceBatch& source, std::span<const ModelView> models,
                             std::size_t max_len);

/// Source batch of one sentence from its feature streams.
SourceBatch single_source(const std::map<std::string, std::vector<int>>& streams);

// ---------------------------------------------------------------------------
// Post-processing

/// Drops EOS, padding and every tag token, then joins BPE subunits.
std::vector<std::string> postprocess_tokens(std::span<const int> ids, const Vocabulary& vocab);
std::string postprocess(std::span<const int> ids, const Vocabulary& vocab);

/// The tag-partition tokens of a decoded stream, in order.
std::vector<std::string> extract_predicted_tags(std::span<const int> ids, const Vocabulary& vocab);

/// Breaks of the tag-then-word pattern in an interleaved stream: a tag that
/// does not start a word, a word with no tag before it, or a stream ending
/// after a tag or inside a word. EOS and PAD end the stream. Search does not
/// enforce the pattern.
std::size_t alternation_violations(std::span<const int> ids, const Vocabulary& vocab);

/// Non-tag tokens of a decoded stream as subunits (EOS and PAD removed).
std::vector<std::string> strip_subunits(std::span<const int> ids, const Vocabulary& vocab);

}  // namespace snmt
