#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "snmt/bpe.hpp"
#include "snmt/corpus.hpp"
#include "snmt/vocabulary.hpp"
#include "support.hpp"

using namespace snmt;
using namespace snmt::test;

namespace {

std::vector<std::string> units_of(const std::vector<std::vector<std::string>>& nested) {
  std::vector<std::string> out;
  for (const auto& w : nested) out.insert(out.end(), w.begin(), w.end());
  return out;
}

std::string random_word(std::mt19937_64& rng, const std::string& alphabet, std::size_t max_len = 8) {
  std::uniform_int_distribution<std::size_t> len(1, max_len), ch(0, alphabet.size() - 1);
  std::string w;
  for (std::size_t i = len(rng); i > 0; --i) w += alphabet[ch(rng)];
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// BPE

TEST(Bpe, LearnsMostFrequentPair) {
  const std::vector<std::string> corpus = {"aaab"};
  const MergeTable table = learn_bpe(corpus, 1);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_EQ(table.merges()[0], (MergeTable::Pair{"a", "a"}));
}

TEST(Bpe, TiesGoToTheSmallestPair) {
  const std::vector<std::string> corpus = {"cd", "ab"};
  const MergeTable table = learn_bpe(corpus, 1, 1);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_EQ(table.merges()[0].first, "a");
}

TEST(Bpe, ZeroMergesIsCharacterSegmentation) {
  const std::vector<std::string> corpus = {"hello", "world"};
  EXPECT_TRUE(learn_bpe(corpus, 0).empty());
  EXPECT_EQ(apply_bpe("cat", MergeTable{}), (std::vector<std::string>{"c+", "a+", "t"}));
}

TEST(Bpe, EmptyAndSingleCharacterCorpora) {
  EXPECT_TRUE(learn_bpe(std::vector<std::string>{}, 10).empty());
  const std::vector<std::string> singles = {"a", "b", "a", "c"};
  const MergeTable t = learn_bpe(singles, 10);
  for (const auto& w : singles) EXPECT_EQ(apply_bpe(w, t), std::vector<std::string>{w});
}

TEST(Bpe, ExampleWordSplitsIntoThreeUnits) {
  EXPECT_EQ(apply_bpe("Netanyahu", example_merges()), (std::vector<std::string>{"Net+", "an+", "yahu"}));
  for (const auto& w : kExampleWords)
    if (w != "Netanyahu") EXPECT_EQ(apply_bpe(w, example_merges()), std::vector<std::string>{w});
}

TEST(Bpe, FullyMergedWordIsUnchanged) {
  const std::vector<std::string> corpus = {"low", "low", "low", "low"};
  const MergeTable t = learn_bpe(corpus, 10);
  EXPECT_EQ(apply_bpe("low", t), std::vector<std::string>{"low"});
}

TEST(Bpe, NoDuplicatePairsAndDeterministic) {
  std::mt19937_64 rng(1);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(random_word(rng, "abcde"));
  const MergeTable a = learn_bpe(corpus, 40), b = learn_bpe(corpus, 40);
  EXPECT_EQ(a.merges(), b.merges());
  std::set<MergeTable::Pair> seen(a.merges().begin(), a.merges().end());
  EXPECT_EQ(seen.size(), a.size());
  EXPECT_THROW(MergeTable(std::vector<MergeTable::Pair>{{"a", "b"}, {"a", "b"}}), std::invalid_argument);
}

TEST(Bpe, RoundTripProperty) {
  std::mt19937_64 rng(2);
  std::vector<std::string> corpus;
  for (int i = 0; i < 500; ++i) corpus.push_back(random_word(rng, "abcdefg"));
  const MergeTable table = learn_bpe(corpus, 60);
  for (int i = 0; i < 300; ++i) {
    const std::string w = random_word(rng, "abcdefgxyz", 12);
    const auto units = apply_bpe(w, table);
    EXPECT_EQ(join_word(units), w);
    EXPECT_EQ(join_subunits(units), std::vector<std::string>{w});
    for (std::size_t k = 0; k + 1 < units.size(); ++k) EXPECT_EQ(units[k].back(), '+');
    EXPECT_EQ(apply_bpe(w, table), units);
  }
}

TEST(Bpe, PrefixStableMergeOrder) {
  // A shorter prefix of the merge table only ever produces a finer segmentation.
  std::mt19937_64 rng(3);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(random_word(rng, "abcd"));
  const MergeTable full = learn_bpe(corpus, 30);
  std::vector<MergeTable::Pair> half(full.merges().begin(), full.merges().begin() + 15);
  const MergeTable prefix(half);
  for (int i = 0; i < 100; ++i) {
    const std::string w = random_word(rng, "abcd");
    EXPECT_GE(apply_bpe(w, prefix).size(), apply_bpe(w, full).size());
  }
}

TEST(Bpe, SaveAndLoad) {
  const std::string dir = scratch_dir("bpe");
  const MergeTable t = example_merges();
  t.save(dir + "/merges.txt");
  EXPECT_EQ(MergeTable::load(dir + "/merges.txt").merges(), t.merges());
}

TEST(Bpe, Utf8) {
  EXPECT_EQ(utf8_chars("año"), (std::vector<std::string>{"a", "ñ", "o"}));
  EXPECT_EQ(join_word(apply_bpe("año", MergeTable{})), "año");
}

// ---------------------------------------------------------------------------
// IOB, interleaving, stripping, replication

TEST(Iob, Examples) {
  const std::vector<std::vector<std::string>> example = {{"Obama"}, {"Net+", "an+", "yahu"}, {"in"}};
  EXPECT_EQ(iob_tags(example), (std::vector<std::string>{"O", "B", "I", "E", "O"}));
  const std::vector<std::vector<std::string>> singles = {{"a"}, {"b"}};
  EXPECT_EQ(iob_tags(singles), (std::vector<std::string>{"O", "O"}));
  const std::vector<std::vector<std::string>> two = {{"ab+", "c"}};
  EXPECT_EQ(iob_tags(two), (std::vector<std::string>{"B", "E"}));
}

TEST(Iob, Property) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> units(1, 5), words(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<std::string>> nested(words(rng));
    std::size_t total = 0;
    for (auto& w : nested) {
      w.assign(units(rng), "u");
      total += w.size();
    }
    const auto tags = iob_tags(nested);
    ASSERT_EQ(tags.size(), total);
    EXPECT_EQ(std::count(tags.begin(), tags.end(), "B"), std::count(tags.begin(), tags.end(), "E"));
    bool open = false;
    for (const auto& t : tags) {
      if (t == "B") {
        EXPECT_FALSE(open);
        open = true;
      } else if (t == "I") {
        EXPECT_TRUE(open);
      } else if (t == "E") {
        EXPECT_TRUE(open);
        open = false;
      } else {
        EXPECT_EQ(t, "O");
        EXPECT_FALSE(open);
      }
    }
    EXPECT_FALSE(open);
  }
}

TEST(Interleave, Examples) {
  const std::vector<std::string> w = {"Obama", "receives"}, t = {"NP", "((S[dcl]\\NP)/PP)/NP"};
  EXPECT_EQ(interleave_target(w, t, example_merges()).tokens,
            (std::vector<std::string>{"NP", "Obama", "((S[dcl]\\NP)/PP)/NP", "receives"}));
  const std::vector<std::string> n = {"Netanyahu"}, np = {"NP"};
  const auto il = interleave_target(n, np, example_merges());
  EXPECT_EQ(il.tokens, (std::vector<std::string>{"NP", "Net+", "an+", "yahu"}));
  EXPECT_EQ(il.is_tag, (std::vector<bool>{true, false, false, false}));
  EXPECT_TRUE(interleave_target({}, {}, MergeTable{}).tokens.empty());
  EXPECT_THROW(interleave_target(w, np, MergeTable{}), std::invalid_argument);
}

TEST(Interleave, ExampleSentence) {
  const auto il = interleave_target(kExampleWords, kExampleTags, example_merges());
  EXPECT_EQ(join_tokens(il.tokens), kExampleInterleaved);
  EXPECT_EQ(il.word_count, 8u);
  EXPECT_EQ(join_tokens(strip_tags(il)), kExampleBpe);
}

TEST(Interleave, LengthLawsAndRoundTrip) {
  std::mt19937_64 rng(5);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(random_word(rng, "abcdef"));
  const MergeTable table = learn_bpe(corpus, 30);
  std::uniform_int_distribution<int> len(0, 10), tag(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> w, t;
    for (int i = len(rng); i > 0; --i) {
      w.push_back(random_word(rng, "abcdef"));
      t.push_back("T" + std::to_string(tag(rng)));
    }
    const auto il = interleave_target(w, t, table);
    const auto bpe = units_of(apply_bpe_words(w, table));
    EXPECT_EQ(strip_tags(il), bpe);
    EXPECT_EQ(il.tokens.size(), bpe.size() + w.size());
    EXPECT_EQ(static_cast<std::size_t>(std::count(il.is_tag.begin(), il.is_tag.end(), true)), w.size());
    // Every maximal run of subunits is preceded by exactly one tag.
    for (std::size_t i = 0; i < il.tokens.size(); ++i) {
      if (il.is_tag[i]) {
        ASSERT_LT(i + 1, il.tokens.size());
        EXPECT_FALSE(il.is_tag[i + 1]);
      }
    }
    if (!il.tokens.empty()) EXPECT_TRUE(il.is_tag[0]);
    // Single-unit words: the stream is exactly twice the word count.
    std::vector<std::string> letters;
    for (const auto& x : w) letters.push_back(x.substr(0, 1));
    EXPECT_EQ(interleave_target(letters, t, table).tokens.size(), 2 * w.size());
  }
}

TEST(StripTags, RemovesEveryTagIdIncludingRuns) {
  Vocabulary v;
  const int a = v.add("a"), b = v.add("b");
  const int t1 = v.add("T1", true), t2 = v.add("T2", true);
  const std::vector<int> ids = {t1, t2, a, t1, b, Vocabulary::kEos};
  EXPECT_EQ(strip_tags(ids, v), (std::vector<int>{a, b, Vocabulary::kEos}));
  const std::vector<int> only_tags = {t1, t2};
  EXPECT_TRUE(strip_tags(only_tags, v).empty());
}

TEST(Replicate, Examples) {
  const std::vector<std::vector<std::string>> nested = {{"Obama"}, {"Net+", "an+", "yahu"}};
  const std::vector<std::string> f = {"NP", "NP"};
  EXPECT_EQ(replicate_source_features(f, nested), (std::vector<std::string>{"NP", "NP", "NP", "NP"}));
  const std::vector<std::vector<std::string>> singles = {{"a"}, {"b"}};
  const std::vector<std::string> g = {"X", "Y"};
  EXPECT_EQ(replicate_source_features(g, singles), g);
  EXPECT_TRUE(replicate_source_features({}, {}).empty());
  EXPECT_THROW(replicate_source_features(std::vector<std::string>{"X"}, singles), std::invalid_argument);
}

TEST(SegmentPair, ExampleSourceRows) {
  const SegmentedPair seg = segment_pair(example_pair(), example_merges(), true);
  EXPECT_EQ(join_tokens(seg.src_units), kExampleBpe);
  EXPECT_EQ(join_tokens(seg.src_features.at(kIobFeature)), kExampleIob);
  EXPECT_EQ(join_tokens(seg.src_features.at("ccg")), kExampleCcgPerUnit);
  EXPECT_EQ(join_tokens(seg.interleaved.tokens), kExampleInterleaved);
  EXPECT_EQ(seg.src_words, 8u);
  EXPECT_EQ(seg.target_length(TargetMode::plain), 10u);
  EXPECT_EQ(seg.target_length(TargetMode::interleaved), 18u);
}

TEST(SegmentPair, MisalignedAnnotationsAreRejected) {
  AnnotatedSentencePair p = example_pair();
  p.tgt_supertags.pop_back();
  EXPECT_TRUE(p.alignment_problem().has_value());
  EXPECT_THROW(segment_pair(p, MergeTable{}, false), std::invalid_argument);
  EXPECT_FALSE(example_pair().alignment_problem().has_value());
}

// ---------------------------------------------------------------------------
// Vocabulary

TEST(Vocabulary, ReservedIdsAndBijection) {
  Vocabulary v;
  EXPECT_EQ(v.size(), Vocabulary::kReserved);
  EXPECT_EQ(v.token(Vocabulary::kPad), Vocabulary::kPadToken);
  EXPECT_EQ(v.token(Vocabulary::kUnk), Vocabulary::kUnkToken);
  EXPECT_EQ(v.token(Vocabulary::kEos), Vocabulary::kEosToken);
  const int a = v.add("a");
  EXPECT_EQ(v.add("a"), a);
  EXPECT_EQ(v.id("a"), a);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_THROW(v.token(99), std::out_of_range);
}

TEST(Vocabulary, WordAndTagWithTheSameStringAreDistinct) {
  Vocabulary v;
  const int word = v.add("N");
  const int tag = v.add("N", true);
  EXPECT_NE(word, tag);
  EXPECT_FALSE(v.is_tag(word));
  EXPECT_TRUE(v.is_tag(tag));
  EXPECT_EQ(v.id("N"), word);
  EXPECT_EQ(v.id("N", true), tag);
  EXPECT_EQ(v.token(word), v.token(tag));
}

TEST(Vocabulary, UnknownTagsMapToUnkTag) {
  Vocabulary v;
  v.add("a");
  v.add("NP", true);
  const int unk_tag = v.add(Vocabulary::kUnkTagToken, true);
  EXPECT_EQ(v.id("S/S", true), unk_tag);
  EXPECT_TRUE(v.is_tag(v.id("S/S", true)));
}

TEST(Vocabulary, EncodeDecodeIsIdentityInVocabulary) {
  Vocabulary v;
  for (const char* w : {"x", "y", "z"}) v.add(w);
  const std::vector<std::string> s = {"z", "x", "y", "x"};
  EXPECT_EQ(v.decode(v.encode(s)), s);
  const std::vector<std::string> oov = {"x", "q"};
  EXPECT_EQ(v.encode(oov), (std::vector<int>{v.id("x"), Vocabulary::kUnk}));
}

TEST(Vocabulary, SaveLoadAndHash) {
  Vocabulary v;
  v.add("a");
  v.add("b");
  v.add("NP", true);
  v.add("a", true);
  const std::string dir = scratch_dir("vocab");
  v.save(dir + "/v.txt", dir + "/v.tags.txt");
  const Vocabulary back = Vocabulary::load(dir + "/v.txt", dir + "/v.tags.txt");
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.content_hash(), v.content_hash());
  Vocabulary w;
  w.add("b");
  w.add("a");
  EXPECT_NE(w.content_hash(), v.content_hash());
}

TEST(BuildVocabularies, CapsAndPartitions) {
  std::mt19937_64 rng(6);
  const auto corpus = toy_corpus(rng, 50, 5, 3);
  const Vocabularies plain = build_vocabularies(corpus, TargetMode::plain, {});
  EXPECT_EQ(plain.target.size(), 5 + Vocabulary::kReserved);
  EXPECT_EQ(plain.target.tag_count(), 0u);
  EXPECT_EQ(plain.tags.tag_count(), 4u);  // three types plus UNK-TAG
  const Vocabularies il = build_vocabularies(corpus, TargetMode::interleaved, {});
  EXPECT_EQ(il.target.word_count() + il.target.tag_count(), il.target.size());
  EXPECT_EQ(il.target.tag_count(), 4u);
  VocabularyCaps caps;
  caps.source = 2;
  caps.target = 3;
  const Vocabularies capped = build_vocabularies(corpus, TargetMode::plain, caps);
  EXPECT_EQ(capped.source.size(), 2 + Vocabulary::kReserved);
  EXPECT_EQ(capped.target.size(), 3 + Vocabulary::kReserved);
}

TEST(BuildVocabularies, FrequencyOrderWithStringTieBreak) {
  AnnotatedSentencePair p;
  p.src_words = {"b", "a", "c", "c"};
  p.tgt_words = {"b", "a"};
  const std::vector<SegmentedPair> corpus = {segment_pair(p, MergeTable{}, false)};
  const Vocabularies v = build_vocabularies(corpus, TargetMode::plain, {});
  EXPECT_EQ(v.source.token(3), "c");
  EXPECT_EQ(v.source.token(4), "a");
  EXPECT_EQ(v.source.token(5), "b");
}

// ---------------------------------------------------------------------------
// Filtering and corpus files

TEST(Filter, BoundaryIsInclusiveAndUsesModelFacingLength) {
  std::mt19937_64 rng(7);
  auto corpus = toy_corpus(rng, 30, 5, 2, 1, 6);
  LengthLimits limits{4, 4};
  const FilterResult plain = filter_corpus(corpus, limits, TargetMode::plain);
  EXPECT_EQ(plain.kept.size() + plain.dropped, corpus.size());
  for (const auto& p : plain.kept) {
    EXPECT_LE(p.src_units.size(), 4u);
    EXPECT_LE(p.tgt_units.size(), 4u);
  }
  bool saw_boundary = false;
  for (const auto& p : corpus)
    if (p.src_units.size() == 4 && p.tgt_units.size() <= 4) saw_boundary = true;
  EXPECT_TRUE(saw_boundary);
  LengthLimits il_limits{4, 8};
  const FilterResult il = filter_corpus(corpus, il_limits, TargetMode::interleaved);
  for (const auto& p : il.kept) EXPECT_LE(p.interleaved.tokens.size(), 8u);
  const FilterResult all = filter_corpus(corpus, LengthLimits{100, 100}, TargetMode::plain);
  EXPECT_EQ(all.kept.size(), corpus.size());
  EXPECT_EQ(all.dropped, 0u);
}

TEST(CorpusFiles, MisalignedSentencesAreReported) {
  const std::string dir = scratch_dir("corpus");
  write_file(dir + "/s", "a b\nc d\ne\n");
  write_file(dir + "/t", "x y\nz\nw\n");
  write_file(dir + "/tags", "T T\nT T\nT\n");
  CorpusFiles files{dir + "/s", dir + "/t", dir + "/tags", {}};
  const LoadedCorpus c = load_corpus(files, true);
  EXPECT_EQ(c.pairs.size(), 2u);
  ASSERT_EQ(c.misaligned.size(), 1u);
  EXPECT_EQ(c.misaligned[0].line, 2u);
  EXPECT_EQ(c.lines, (std::vector<std::size_t>{1, 3}));
  write_file(dir + "/short", "a\n");
  CorpusFiles bad{dir + "/s", dir + "/short", "", {}};
  EXPECT_THROW(load_corpus(bad, false), std::runtime_error);
}

TEST(CorpusFiles, TokensAndLines) {
  EXPECT_EQ(split_tokens("  a\tb  c "), (std::vector<std::string>{"a", "b", "c"}));
  const std::vector<std::string> t = {"a", "b"};
  EXPECT_EQ(join_tokens(t), "a b");
  const std::string dir = scratch_dir("lines");
  const std::vector<std::string> lines = {"one", "", "three"};
  write_lines(dir + "/f", lines);
  EXPECT_EQ(read_lines(dir + "/f"), lines);
}
