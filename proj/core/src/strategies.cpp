#include "snmt/strategies.hpp"

#include <algorithm>
#include <stdexcept>

namespace snmt {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::interleaved: return "interleaved";
    case Strategy::multitask: return "multitask";
  }
  return "baseline";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "baseline") return Strategy::baseline;
  if (name == "interleaved") return Strategy::interleaved;
  if (name == "multitask") return Strategy::multitask;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected baseline, interleaved or multitask)");
}

TargetMode target_mode(Strategy s) {
  return s == Strategy::interleaved ? TargetMode::interleaved : TargetMode::plain;
}

bool StrategyConfig::uses_iob() const {
  return std::find(source_features.begin(), source_features.end(), kIobFeature) != source_features.end();
}

ModelConfig make_model_config(const StrategyConfig& strategy, const Vocabularies& vocabs,
                              const ModelSizes& sizes) {
  ModelConfig config;
  config.hidden = sizes.hidden;
  config.attention = sizes.attention;
  config.output_width = sizes.output;

  std::size_t extra = 0;
  std::vector<FeatureEmbedding> features;
  for (const auto& name : strategy.source_features) {
    auto vit = vocabs.source_features.find(name);
    if (vit == vocabs.source_features.end())
      throw std::invalid_argument("no vocabulary for source feature '" + name + "'");
    auto wit = strategy.feature_widths.find(name);
    if (wit == strategy.feature_widths.end() || wit->second == 0)
      throw std::invalid_argument("no embedding width for source feature '" + name + "'");
    features.push_back({name, vit->second.size(), wit->second});
    extra += wit->second;
  }
  if (extra >= sizes.source_embedding)
    throw std::invalid_argument("feature widths leave no room for the word embedding");
  config.source.features.push_back({kWordFeature, vocabs.source.size(), sizes.source_embedding - extra});
  config.source.features.insert(config.source.features.end(), features.begin(), features.end());

  switch (strategy.mode) {
    case Strategy::baseline:
      config.decoders.push_back({kWordDecoder, vocabs.target.size(), sizes.target_embedding});
      break;
    case Strategy::interleaved:
      if (vocabs.target.tag_count() == 0)
        throw std::invalid_argument("interleaved mode needs a tag-partitioned target vocabulary");
      config.decoders.push_back({kWordDecoder, vocabs.target.size(), sizes.target_embedding});
      break;
    case Strategy::multitask:
      if (vocabs.tags.tag_count() == 0)
        throw std::invalid_argument("multitask mode needs a separate tag vocabulary");
      config.decoders.push_back({kMultitaskWordDecoder, vocabs.target.size(), sizes.target_embedding});
      config.decoders.push_back({kMultitaskTagDecoder, vocabs.tags.size(), sizes.target_embedding});
      break;
  }
  config.validate();
  return config;
}

EncodedExample encode_example(const SegmentedPair& pair, const StrategyConfig& strategy,
                              const Vocabularies& vocabs, std::size_t index) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("sentence " + std::to_string(index) + ": " + what);
  };
  EncodedExample ex;
  if (pair.src_units.empty()) fail("empty source");
  ex.source[kWordFeature] = vocabs.source.encode(pair.src_units);
  for (const auto& name : strategy.source_features) {
    auto it = pair.src_features.find(name);
    if (it == pair.src_features.end()) fail("missing source feature '" + name + "'");
    if (it->second.size() != pair.src_units.size()) fail("source feature '" + name + "' is misaligned");
    auto vit = vocabs.source_features.find(name);
    if (vit == vocabs.source_features.end()) fail("no vocabulary for source feature '" + name + "'");
    ex.source[name] = vit->second.encode(it->second);
  }

  auto with_eos = [](std::vector<int> ids) {
    ids.push_back(Vocabulary::kEos);
    return ids;
  };

  switch (strategy.mode) {
    case Strategy::baseline:
      ex.targets.push_back(with_eos(vocabs.target.encode(pair.tgt_units)));
      break;
    case Strategy::interleaved: {
      if (!pair.has_tags()) fail("missing target supertags");
      const auto& il = pair.interleaved;
      std::vector<int> ids;
      ids.reserve(il.tokens.size() + 1);
      for (std::size_t i = 0; i < il.tokens.size(); ++i) ids.push_back(vocabs.target.id(il.tokens[i], il.is_tag[i]));
      ex.targets.push_back(with_eos(std::move(ids)));
      break;
    }
    case Strategy::multitask:
      if (!pair.has_tags()) fail("missing target supertags");
      ex.targets.push_back(with_eos(vocabs.target.encode(pair.tgt_units)));
      ex.targets.push_back(with_eos(vocabs.tags.encode(pair.tgt_tags, true)));
      break;
  }
  return ex;
}

ModelBatch collate(std::span<const EncodedExample> examples) {
  if (examples.empty()) throw std::invalid_argument("collate: empty batch");
  ModelBatch batch;
  for (const auto& [name, ids] : examples[0].source) {
    std::vector<std::vector<int>> seqs;
    seqs.reserve(examples.size());
    for (const auto& ex : examples) seqs.push_back(ex.source.at(name));
    batch.source[name] = PaddedBatch::from_sequences(seqs);
  }
  const std::size_t streams = examples[0].targets.size();
  for (std::size_t s = 0; s < streams; ++s) {
    std::vector<std::vector<int>> seqs;
    for (const auto& ex : examples) seqs.push_back(ex.targets.at(s));
    batch.targets.push_back(PaddedBatch::from_sequences(seqs));
  }
  return batch;
}

ModelBatch build_batch(std::span<const SegmentedPair> pairs, const StrategyConfig& strategy,
                       const Vocabularies& vocabs) {
  std::vector<EncodedExample> examples;
  examples.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) examples.push_back(encode_example(pairs[i], strategy, vocabs, i));
  return collate(examples);
}

SequenceLoss interleaved_loss(BoundParameters& params, const ModelConfig& config,
                              const ModelBatch& batch) {
  return sequence_loss(params, config, batch.source, batch.targets.at(0), 0);
}

MultitaskLoss multitask_loss(BoundParameters& params, const ModelConfig& config,
                             const ModelBatch& batch, double tag_weight) {
  if (config.decoders.size() != 2 || batch.targets.size() != 2)
    throw std::invalid_argument("multitask_loss: needs a word and a tag decoder");
  EncoderStates enc = encode_source(params, config, batch.source);
  DecoderContext word_ctx = prepare_decoder(params, config, config.decoder(0), enc);
  DecoderContext tag_ctx = prepare_decoder(params, config, config.decoder(1), enc);
  SequenceLoss word = decoder_loss(params, config, word_ctx, batch.targets[0]);
  SequenceLoss tag = decoder_loss(params, config, tag_ctx, batch.targets[1]);

  MultitaskLoss out;
  out.word = word.loss;
  out.tag = tag.loss;
  out.total = add(word.loss, tag_weight == 1.0 ? tag.loss : scale(tag.loss, tag_weight));
  out.l_word = word.result.loss;
  out.l_tag = tag.result.loss;
  out.l = out.total.value().item();
  return out;
}

Var training_loss(BoundParameters& params, const ModelConfig& config, const ModelBatch& batch,
                  double tag_weight) {
  if (config.decoders.size() == 2) return multitask_loss(params, config, batch, tag_weight).total;
  return sequence_loss(params, config, batch.source, batch.targets.at(0), 0).loss;
}

const Tensor& shared_vocab_embedding(const Vocabulary& vocab, const ParameterSet& params) {
  if (vocab.tag_count() == 0) throw std::invalid_argument("shared embedding: vocabulary has no tag partition");
  const Tensor& table = params.at(kWordDecoder + ".emb");
  if (table.rows() != vocab.size())
    throw std::invalid_argument("shared embedding: table has " + std::to_string(table.rows()) +
                                " rows for a vocabulary of " + std::to_string(vocab.size()));
  return table;
}

std::vector<std::string> decoder_parameter_names(const ModelConfig& config, std::size_t decoder) {
  const std::string prefix = config.decoder(decoder).prefix + ".";
  std::vector<std::string> names;
  for (const auto& [name, shape] : parameter_shapes(config))
    if (name.compare(0, prefix.size(), prefix) == 0) names.push_back(name);
  return names;
}

}  // namespace snmt
