#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "snmt/strategies.hpp"
#include "support.hpp"

using namespace snmt;
using namespace snmt::test;

namespace {

Vocabularies example_vocabs(TargetMode mode, const SegmentedPair& seg) {
  const std::vector<SegmentedPair> corpus = {seg};
  return build_vocabularies(corpus, mode, {});
}

StrategyConfig strategy(Strategy mode, std::vector<std::string> features = {}) {
  StrategyConfig s;
  s.mode = mode;
  for (const auto& f : features) s.feature_widths[f] = 4;
  s.source_features = std::move(features);
  return s;
}

std::set<std::string> shape_names(const ModelConfig& c) {
  std::set<std::string> out;
  for (const auto& [name, shape] : parameter_shapes(c)) out.insert(name);
  return out;
}

}  // namespace

TEST(StrategyNames, ParseAndPrint) {
  for (Strategy s : {Strategy::baseline, Strategy::interleaved, Strategy::multitask})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("serial"), std::invalid_argument);
  EXPECT_EQ(target_mode(Strategy::interleaved), TargetMode::interleaved);
  EXPECT_EQ(target_mode(Strategy::multitask), TargetMode::plain);
  EXPECT_TRUE(strategy(Strategy::baseline, {"iob"}).uses_iob());
  EXPECT_FALSE(strategy(Strategy::baseline, {"ccg"}).uses_iob());
  EXPECT_FALSE(strategy(Strategy::baseline).needs_target_tags());
  EXPECT_TRUE(strategy(Strategy::multitask).needs_target_tags());
}

TEST(ModelLayout, FeatureWidthsShareTheSourceEmbedding) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), true);
  Vocabularies v = example_vocabs(TargetMode::plain, seg);
  StrategyConfig s = strategy(Strategy::baseline, {"iob", "ccg"});
  s.feature_widths = {{"iob", 10}, {"ccg", 135}};
  const ModelConfig c = make_model_config(s, v, toy_sizes(8, 500));
  ASSERT_EQ(c.source.features.size(), 3u);
  EXPECT_EQ(c.source.features[0].name, kWordFeature);
  EXPECT_EQ(c.source.features[0].width, 355u);
  EXPECT_EQ(c.source.features[1].name, "iob");
  EXPECT_EQ(c.source.features[2].width, 135u);
  EXPECT_EQ(c.source.total_width(), 500u);
  EXPECT_EQ(c.source.features[1].vocab_size, v.source_features.at("iob").size());

  s.feature_widths["ccg"] = 490;
  EXPECT_THROW(make_model_config(s, v, toy_sizes(8, 500)), std::invalid_argument);
  s.feature_widths.erase("ccg");
  EXPECT_THROW(make_model_config(s, v, toy_sizes(8, 500)), std::invalid_argument);
  EXPECT_THROW(make_model_config(strategy(Strategy::baseline, {"dep"}), v, toy_sizes(8)), std::invalid_argument);
}

TEST(ModelLayout, InterleavingChangesOnlyTheTargetVocabulary) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), false);
  const Vocabularies plain = example_vocabs(TargetMode::plain, seg);
  const Vocabularies inter = example_vocabs(TargetMode::interleaved, seg);
  const ModelConfig base = make_model_config(strategy(Strategy::baseline), plain, toy_sizes(8));
  const ModelConfig il = make_model_config(strategy(Strategy::interleaved), inter, toy_sizes(8));
  EXPECT_EQ(shape_names(base), shape_names(il));
  ASSERT_EQ(il.decoders.size(), 1u);
  EXPECT_EQ(il.decoder().vocab_size, inter.target.size());
  EXPECT_EQ(inter.target.size(), plain.target.size() + inter.target.tag_count());
  // Seven tag types and UNK-TAG.
  EXPECT_EQ(inter.target.tag_count(), 7u);
  EXPECT_THROW(make_model_config(strategy(Strategy::interleaved), plain, toy_sizes(8)), std::invalid_argument);
}

TEST(ModelLayout, MultitaskDecodersAreDisjoint) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), false);
  const Vocabularies v = example_vocabs(TargetMode::plain, seg);
  const ModelConfig c = make_model_config(strategy(Strategy::multitask), v, toy_sizes(8));
  ASSERT_EQ(c.decoders.size(), 2u);
  EXPECT_EQ(c.decoder(0).prefix, kMultitaskWordDecoder);
  EXPECT_EQ(c.decoder(1).prefix, kMultitaskTagDecoder);
  EXPECT_EQ(c.decoder(1).vocab_size, v.tags.size());
  const auto a = decoder_parameter_names(c, 0), b = decoder_parameter_names(c, 1);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a.size(), b.size());
  for (const auto& name : a) EXPECT_EQ(std::count(b.begin(), b.end(), name), 0) << name;
  for (const auto& name : a) EXPECT_EQ(name.rfind("dec_word.", 0), 0u) << name;
  // Everything else is the shared source side.
  for (const auto& name : shape_names(c)) {
    const bool owned = std::count(a.begin(), a.end(), name) || std::count(b.begin(), b.end(), name);
    if (!owned) EXPECT_TRUE(name.rfind("enc.", 0) == 0 || name.rfind("src.", 0) == 0) << name;
  }
  Vocabularies no_tags = v;
  no_tags.tags = Vocabulary();
  EXPECT_THROW(make_model_config(strategy(Strategy::multitask), no_tags, toy_sizes(8)), std::invalid_argument);
}

TEST(Encoding, ExampleSentenceStreams) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), true);
  const Vocabularies plain = example_vocabs(TargetMode::plain, seg);
  const Vocabularies inter = example_vocabs(TargetMode::interleaved, seg);

  const auto base = encode_example(seg, strategy(Strategy::baseline, {"iob"}), plain);
  ASSERT_EQ(base.targets.size(), 1u);
  EXPECT_EQ(base.targets[0].size(), 11u);
  EXPECT_EQ(base.targets[0].back(), Vocabulary::kEos);
  EXPECT_EQ(base.source.at(kWordFeature).size(), 10u);
  EXPECT_EQ(plain.source_features.at("iob").decode(base.source.at("iob")), words(kExampleIob));

  const auto il = encode_example(seg, strategy(Strategy::interleaved), inter);
  ASSERT_EQ(il.targets.size(), 1u);
  EXPECT_EQ(il.targets[0].size(), 19u);
  std::vector<int> body(il.targets[0].begin(), il.targets[0].end() - 1);
  EXPECT_EQ(join_tokens(inter.target.decode(body)), kExampleInterleaved);
  EXPECT_TRUE(inter.target.is_tag(il.targets[0][0]));
  EXPECT_FALSE(inter.target.is_tag(il.targets[0][1]));
  EXPECT_EQ(il.source.count("iob"), 0u);

  const auto mt = encode_example(seg, strategy(Strategy::multitask), plain);
  ASSERT_EQ(mt.targets.size(), 2u);
  EXPECT_EQ(mt.targets[0].size(), 11u);
  EXPECT_EQ(mt.targets[1].size(), 9u);
  std::vector<int> tags(mt.targets[1].begin(), mt.targets[1].end() - 1);
  EXPECT_EQ(plain.tags.decode(tags), kExampleTags);
  EXPECT_EQ(mt.targets[0], base.targets[0]);
}

TEST(Encoding, TagAndWordWithTheSameSpellingGetDifferentIds) {
  AnnotatedSentencePair p;
  p.src_words = {"N"};
  p.tgt_words = {"N"};
  p.tgt_supertags = {"N"};
  const SegmentedPair seg = segment_pair(p, MergeTable{}, false);
  const Vocabularies v = example_vocabs(TargetMode::interleaved, seg);
  const auto ex = encode_example(seg, strategy(Strategy::interleaved), v);
  ASSERT_EQ(ex.targets[0].size(), 3u);
  EXPECT_NE(ex.targets[0][0], ex.targets[0][1]);
  EXPECT_TRUE(v.target.is_tag(ex.targets[0][0]));
  EXPECT_FALSE(v.target.is_tag(ex.targets[0][1]));
}

TEST(Encoding, MissingAnnotationsNameTheSentence) {
  SegmentedPair seg = segment_pair(example_pair(), example_merges(), false);
  const Vocabularies v = example_vocabs(TargetMode::interleaved, seg);
  SegmentedPair bare = seg;
  bare.tgt_tags.clear();
  bare.interleaved = {};
  const std::vector<SegmentedPair> pairs = {seg, bare};
  try {
    build_batch(pairs, strategy(Strategy::interleaved), v);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("sentence 1"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(build_batch(pairs, strategy(Strategy::baseline), v));
  EXPECT_THROW(build_batch(pairs, strategy(Strategy::baseline, {"dep"}), v), std::invalid_argument);
  EXPECT_THROW(collate({}), std::invalid_argument);
}

TEST(Batching, CollatePadsEveryStream) {
  std::mt19937_64 rng(3);
  const ModelConfig c = toy_config(9, 4, Strategy::multitask, 6);
  const auto examples = random_examples(rng, c, 5);
  const ModelBatch b = collate(examples);
  EXPECT_EQ(b.size(), 5u);
  ASSERT_EQ(b.targets.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(b.targets[s].lengths[i], examples[i].targets[s].size());
      for (std::size_t t = 0; t < b.targets[s].length; ++t)
        EXPECT_EQ(b.targets[s].at(t, i), t < examples[i].targets[s].size() ? examples[i].targets[s][t] : 0);
    }
}

TEST(MultitaskLossTest, TagWeightAndDispatch) {
  std::mt19937_64 rng(4);
  const ModelConfig c = toy_config(9, 4, Strategy::multitask, 6);
  const ParameterSet params = init_parameters(c, 5);
  const ModelBatch batch = random_batch(rng, c, 4);
  Tape tape;
  BoundParameters bound(tape, params);
  const MultitaskLoss one = multitask_loss(bound, c, batch);
  const MultitaskLoss half = multitask_loss(bound, c, batch, 0.5);
  EXPECT_NEAR(one.l, one.l_word + one.l_tag, 1e-12);
  EXPECT_NEAR(half.l, half.l_word + 0.5 * half.l_tag, 1e-12);
  EXPECT_NEAR(training_loss(bound, c, batch).value().item(), one.l, 1e-12);
  EXPECT_NEAR(sequence_loss(bound, c, batch.source, batch.targets[1], 1).result.loss, one.l_tag, 1e-12);

  const ModelConfig single = toy_config(9, 4);
  EXPECT_THROW(multitask_loss(bound, single, batch), std::invalid_argument);
}

TEST(MultitaskLossTest, EachTaskOnlyTouchesItsDecoderAndTheEncoder) {
  std::mt19937_64 rng(6);
  const ModelConfig c = toy_config(9, 4, Strategy::multitask, 6);
  const ParameterSet params = init_parameters(c, 7);
  const ModelBatch batch = random_batch(rng, c, 3);
  const ParameterSet gw = gradients_of(params, [&](BoundParameters& p) { return multitask_loss(p, c, batch).word; });
  const ParameterSet gt = gradients_of(params, [&](BoundParameters& p) { return multitask_loss(p, c, batch).tag; });
  const auto tag_names = decoder_parameter_names(c, 1), word_names = decoder_parameter_names(c, 0);
  for (const auto& n : tag_names)
    for (double v : gw.at(n).values()) EXPECT_EQ(v, 0.0) << n;
  for (const auto& n : word_names)
    for (double v : gt.at(n).values()) EXPECT_EQ(v, 0.0) << n;
  double enc = 0;
  for (double v : gt.at("enc.fwd.Wx").values()) enc += std::abs(v);
  EXPECT_GT(enc, 0.0);
}

TEST(MultitaskLossTest, FiniteDifferences) {
  std::mt19937_64 rng(8);
  ModelConfig c = toy_config(7, 3, Strategy::multitask, 5, 4);
  c.init_range = 0.5;
  const ParameterSet params = init_parameters(c, 9);
  const ModelBatch batch = random_batch(rng, c, 2);
  const auto r = check_model_gradients(params, [&](BoundParameters& p) { return multitask_loss(p, c, batch).total; });
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Interleaving, TagsAndWordsShareOneEmbeddingTable) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), false);
  const Vocabularies v = example_vocabs(TargetMode::interleaved, seg);
  const ModelConfig c = make_model_config(strategy(Strategy::interleaved), v, toy_sizes(8));
  const ParameterSet params = init_parameters(c, 10);
  const Tensor& table = shared_vocab_embedding(v.target, params);
  EXPECT_EQ(table.rows(), v.target.size());
  const int tag = v.target.id("NP", true), word = v.target.id("Obama");
  EXPECT_NE(table(tag, 0), table(word, 0));

  const Vocabularies plain = example_vocabs(TargetMode::plain, seg);
  const ModelConfig pc = make_model_config(strategy(Strategy::baseline), plain, toy_sizes(8));
  EXPECT_THROW(shared_vocab_embedding(plain.target, init_parameters(pc, 1)), std::invalid_argument);
  EXPECT_THROW(shared_vocab_embedding(v.target, init_parameters(pc, 1)), std::invalid_argument);

  const std::vector<SegmentedPair> pairs = {seg};
  const ModelBatch batch = build_batch(pairs, strategy(Strategy::interleaved), v);
  Tape tape;
  BoundParameters bound(tape, params);
  EXPECT_DOUBLE_EQ(interleaved_loss(bound, c, batch).result.loss,
                   sequence_loss(bound, c, batch.source, batch.targets[0]).result.loss);
}
