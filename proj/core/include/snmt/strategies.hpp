#pragma once

// Ways of bringing target syntax into the model:
//
//   baseline     one decoder over BPE words
//   interleaved  one decoder over "tag w1 w2 tag w3 ..." in a shared vocabulary;
//                the decoder is unchanged, only data and vocabulary differ
//   multitask    one shared encoder, a word decoder and a tag decoder with
//                disjoint parameters; l = l_word + l_tag
//
// Source features (IOB, dependency labels, supertags) are extra embedding
// streams concatenated with the word embedding in any mode.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snmt/corpus.hpp"
#include "snmt/model.hpp"

namespace snmt {

enum class Strategy { baseline, interleaved, multitask };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
TargetMode target_mode(Strategy s);

inline const std::string kWordDecoder = "dec";
inline const std::string kMultitaskWordDecoder = "dec_word";
inline const std::string kMultitaskTagDecoder = "dec_tag";

struct StrategyConfig {
  Strategy mode = Strategy::baseline;
  /// Extra source features, in embedding order after the word feature.
  std::vector<std::string> source_features;
  /// Width per extra feature; the word feature receives the remainder.
  std::map<std::string, std::size_t> feature_widths;
  double tag_loss_weight = 1.0;

  bool needs_target_tags() const { return mode != Strategy::baseline; }
  bool uses_iob() const;

  bool operator==(const StrategyConfig&) const = default;
};

struct ModelSizes {
  std::size_t source_embedding = 64;  // total, shared among features
  std::size_t target_embedding = 64;
  std::size_t hidden = 64;
  std::size_t attention = 64;
  std::size_t output = 64;

  bool operator==(const ModelSizes&) const = default;
};

/// Builds the model layout for a strategy. Checks that the vocabularies carry
/// what the strategy needs (tag partition for interleaving, a tag vocabulary
/// for multitasking).
ModelConfig make_model_config(const StrategyConfig& strategy, const Vocabularies& vocabs,
                              const ModelSizes& sizes);

/// Id sequences for one pair: source streams by feature, and one target
/// stream per decoder (each ending in EOS).
struct EncodedExample {
  std::map<std::string, std::vector<int>> source;
  std::vector<std::vector<int>> targets;
};

EncodedExample encode_example(const SegmentedPair& pair, const StrategyConfig& strategy,
                              const Vocabularies& vocabs, std::size_t index = 0);

struct ModelBatch {
  SourceBatch source;
  /// baseline/interleaved: the single target stream; multitask: words then tags.
  std::vector<PaddedBatch> targets;
  std::size_t size() const { return targets.empty() ? 0 : targets[0].batch; }
};

ModelBatch collate(std::span<const EncodedExample> examples);

/// Encodes and pads a group of pairs; missing annotations raise an error
/// naming the offending sentence.
ModelBatch build_batch(std::span<const SegmentedPair> pairs, const StrategyConfig& strategy,
                       const Vocabularies& vocabs);

/// Interleaved loss is the ordinary sequence loss over the interleaved stream.
SequenceLoss interleaved_loss(BoundParameters& params, const ModelConfig& config,
                              const ModelBatch& batch);

struct MultitaskLoss {
  Var total;
  Var word;
  Var tag;
  double l = 0.0;
  double l_word = 0.0;
  double l_tag = 0.0;
};

/// Shared encoder, evaluated once, feeding both decoders.
MultitaskLoss multitask_loss(BoundParameters& params, const ModelConfig& config,
                             const ModelBatch& batch, double tag_weight = 1.0);

/// Dispatches on the number of decoders in the model.
Var training_loss(BoundParameters& params, const ModelConfig& config, const ModelBatch& batch,
                  double tag_weight = 1.0);

/// The target embedding table of the single decoder: word and tag rows alike.
const Tensor& shared_vocab_embedding(const Vocabulary& vocab, const ParameterSet& params);

/// Names of every parameter owned by one decoder.
std::vector<std::string> decoder_parameter_names(const ModelConfig& config, std::size_t decoder);

}  // namespace snmt
