#include "snmt/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "snmt/bpe.hpp"
#include "snmt/corpus.hpp"

namespace fs = std::filesystem;

namespace snmt {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string in_dir(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::string vocab_file(const std::string& dir, const std::string& role) { return in_dir(dir, "vocab." + role + ".txt"); }
std::string tagset_file(const std::string& dir, const std::string& role) {
  return in_dir(dir, "vocab." + role + ".tagset.txt");
}

/// Features read from files: everything requested except the generated IOB stream.
std::vector<std::string> file_features(const StrategyConfig& strategy) {
  std::vector<std::string> out;
  for (const auto& f : strategy.source_features)
    if (f != kIobFeature) out.push_back(f);
  return out;
}

CorpusFiles corpus_files(const SplitPaths& paths, const StrategyConfig& strategy, const std::string& split) {
  CorpusFiles files;
  files.source = paths.source;
  files.target = paths.target;
  files.target_tags = paths.tags;
  for (const auto& name : file_features(strategy)) {
    auto it = paths.features.find(name);
    if (it == paths.features.end() || it->second.empty())
      throw std::invalid_argument("no file for source feature '" + name + "' in the " + split + " split");
    files.source_features[name] = it->second;
  }
  return files;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument(what + " is not configured");
  if (!fs::exists(path)) throw std::invalid_argument(what + " does not exist: " + path);
}

std::string ids_line(std::span<const int> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::vector<int>> read_ids(const std::string& path) {
  std::vector<std::vector<int>> out;
  for (const auto& line : read_lines(path)) {
    std::vector<int> ids;
    for (const auto& tok : split_tokens(line)) ids.push_back(std::stoi(tok));
    out.push_back(std::move(ids));
  }
  return out;
}

std::vector<Sentence> read_sentences(const std::string& path) {
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

std::string describe(const std::vector<Misalignment>& problems, const std::string& split) {
  std::ostringstream os;
  for (const auto& m : problems) os << "  " << split << " line " << m.line << ": " << m.problem << '\n';
  return os.str();
}

LoadedCorpus load_split(const ExperimentConfig& config, const SplitPaths& paths, const std::string& split,
                        std::ostream& log) {
  require_file(paths.source, split + " source");
  require_file(paths.target, split + " target");
  const bool tags = config.strategy.needs_target_tags();
  if (tags) require_file(paths.tags, split + " supertag file");
  CorpusFiles files = corpus_files(paths, config.strategy, split);
  // Reference tags are read whenever present; they are only required by syntax-aware strategies.
  bool read_tags = tags || (!paths.tags.empty() && fs::exists(paths.tags) && fs::file_size(paths.tags) > 0);
  if (read_tags && !tags && read_lines(paths.tags).size() != read_lines(paths.target).size()) {
    log << "warning: ignoring " << split << " supertag file with a different line count: " << paths.tags << '\n';
    read_tags = false;
  }
  if (!read_tags) files.target_tags.clear();
  LoadedCorpus corpus = load_corpus(files, read_tags);
  if (!corpus.misaligned.empty()) {
    if (config.on_misaligned == MisalignedPolicy::error)
      throw std::runtime_error("misaligned annotations in the " + split + " split:\n" +
                               describe(corpus.misaligned, split));
    log << "warning: dropping " << corpus.misaligned.size() << " " << split << " sentence(s):\n"
        << describe(corpus.misaligned, split);
  }
  return corpus;
}

void write_split(const ExperimentConfig& config, const std::string& split, std::span<const SegmentedPair> pairs,
                 std::span<const AnnotatedSentencePair> raw, const Vocabularies& vocabs) {
  const std::string& dir = config.work_dir;
  const TargetMode mode = target_mode(config.strategy.mode);
  std::vector<std::string> src_txt, src_bpe, tgt_bpe, src_ids, tgt_ids, tag_ids, refs, ref_tags;
  std::map<std::string, std::vector<std::string>> feat_txt, feat_bpe, feat_ids;
  bool have_tags = true;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SegmentedPair& p = pairs[i];
    const AnnotatedSentencePair& a = raw[i];
    EncodedExample ex = encode_example(p, config.strategy, vocabs, i);
    src_txt.push_back(join_tokens(a.src_words));
    src_bpe.push_back(join_tokens(p.src_units));
    tgt_bpe.push_back(join_tokens(mode == TargetMode::interleaved ? p.interleaved.tokens : p.tgt_units));
    src_ids.push_back(ids_line(ex.source.at(kWordFeature)));
    tgt_ids.push_back(ids_line(ex.targets.at(0)));
    if (ex.targets.size() > 1) tag_ids.push_back(ids_line(ex.targets[1]));
    for (const auto& name : config.strategy.source_features) {
      feat_ids[name].push_back(ids_line(ex.source.at(name)));
      feat_bpe[name].push_back(join_tokens(p.src_features.at(name)));
    }
    for (const auto& name : file_features(config.strategy)) feat_txt[name].push_back(join_tokens(a.src_features.at(name)));
    refs.push_back(join_tokens(a.tgt_words));
    ref_tags.push_back(join_tokens(a.tgt_supertags));
    if (a.tgt_supertags.empty()) have_tags = false;
  }
  write_lines(in_dir(dir, split + ".src.txt"), src_txt);
  write_lines(in_dir(dir, split + ".src.bpe"), src_bpe);
  write_lines(in_dir(dir, split + ".tgt.bpe"), tgt_bpe);
  write_lines(in_dir(dir, split + ".src.ids"), src_ids);
  write_lines(in_dir(dir, split + ".tgt.ids"), tgt_ids);
  if (!tag_ids.empty()) write_lines(in_dir(dir, split + ".tag.ids"), tag_ids);
  for (const auto& [name, lines] : feat_ids) write_lines(in_dir(dir, split + ".feature." + name + ".ids"), lines);
  for (const auto& [name, lines] : feat_bpe) write_lines(in_dir(dir, split + ".feature." + name + ".bpe"), lines);
  for (const auto& [name, lines] : feat_txt) write_lines(in_dir(dir, split + ".feature." + name + ".txt"), lines);
  write_lines(in_dir(dir, split + ".ref"), refs);
  if (have_tags && !pairs.empty()) write_lines(in_dir(dir, split + ".ref.tags"), ref_tags);
}

void save_vocab(const Vocabulary& v, const std::string& dir, const std::string& role) {
  v.save(vocab_file(dir, role), tagset_file(dir, role));
}

Vocabulary load_vocab(const std::string& dir, const std::string& role) {
  return Vocabulary::load(vocab_file(dir, role), tagset_file(dir, role));
}

}  // namespace

std::map<std::string, std::uint64_t> vocabulary_hashes(const Vocabularies& vocabs) {
  std::map<std::string, std::uint64_t> out;
  out["source"] = vocabs.source.content_hash();
  out["target"] = vocabs.target.content_hash();
  out["tags"] = vocabs.tags.content_hash();
  for (const auto& [name, v] : vocabs.source_features) out["feature." + name] = v.content_hash();
  return out;
}

PreprocessResult run_preprocess(const ExperimentConfig& config, std::ostream& log) {
  const StrategyConfig& strategy = config.strategy;
  const TargetMode mode = target_mode(strategy.mode);
  fs::create_directories(config.work_dir);

  PreprocessResult result;
  LoadedCorpus train = load_split(config, config.train, "train", log);
  result.misaligned = train.misaligned;
  if (train.pairs.empty()) throw std::runtime_error("no usable training sentences");

  MergeTable merges;
  if (!config.bpe_table.empty()) {
    merges = MergeTable::load(config.bpe_table);
  } else {
    std::vector<std::string> stream;
    for (const auto& p : train.pairs) {
      stream.insert(stream.end(), p.src_words.begin(), p.src_words.end());
      stream.insert(stream.end(), p.tgt_words.begin(), p.tgt_words.end());
    }
    merges = learn_bpe(stream, config.bpe_merges, config.bpe_min_frequency);
  }
  result.merges = merges.size();
  merges.save(in_dir(config.work_dir, "merges.txt"));

  std::vector<SegmentedPair> segmented;
  segmented.reserve(train.pairs.size());
  for (const auto& p : train.pairs) segmented.push_back(segment_pair(p, merges, strategy.uses_iob()));
  FilterResult filtered = filter_corpus(segmented, config.length_limits(), mode);
  std::vector<AnnotatedSentencePair> kept_raw;
  for (std::size_t i : filtered.kept_indices) kept_raw.push_back(train.pairs[i]);
  if (filtered.kept.empty()) throw std::runtime_error("length filtering removed every training sentence");

  const Vocabularies vocabs = build_vocabularies(filtered.kept, mode, config.vocab);
  if (strategy.mode == Strategy::interleaved && vocabs.target.tag_count() == 0)
    throw std::runtime_error("interleaved mode found no target supertags");
  save_vocab(vocabs.source, config.work_dir, "source");
  save_vocab(vocabs.target, config.work_dir, "target");
  save_vocab(vocabs.tags, config.work_dir, "tags");
  for (const auto& [name, v] : vocabs.source_features) save_vocab(v, config.work_dir, "feature." + name);

  SplitCounts& tc = result.splits["train"];
  tc.lines = train.pairs.size() + train.misaligned.size();
  tc.misaligned = train.misaligned.size();
  tc.too_long = filtered.dropped;
  tc.kept = filtered.kept.size();
  write_split(config, "train", filtered.kept, kept_raw, vocabs);

  for (const auto& [name, paths] : {std::pair<std::string, const SplitPaths*>{"dev", &config.dev}, {"test", &config.test}}) {
    if (paths->source.empty()) continue;
    LoadedCorpus c = load_split(config, *paths, name, log);
    std::vector<SegmentedPair> seg;
    for (const auto& p : c.pairs) seg.push_back(segment_pair(p, merges, strategy.uses_iob()));
    SplitCounts& sc = result.splits[name];
    sc.lines = c.pairs.size() + c.misaligned.size();
    sc.misaligned = c.misaligned.size();
    sc.kept = c.pairs.size();
    write_split(config, name, seg, c.pairs, vocabs);
  }

  auto& m = result.manifest;
  m.push_back("strategy\t" + to_string(strategy.mode));
  m.push_back("bpe.merges\t" + std::to_string(result.merges));
  for (const auto& [name, c] : result.splits) {
    m.push_back(name + ".lines\t" + std::to_string(c.lines));
    m.push_back(name + ".misaligned\t" + std::to_string(c.misaligned));
    m.push_back(name + ".too_long\t" + std::to_string(c.too_long));
    m.push_back(name + ".kept\t" + std::to_string(c.kept));
  }
  m.push_back("vocab.source\t" + std::to_string(vocabs.source.size()));
  m.push_back("vocab.target\t" + std::to_string(vocabs.target.size()));
  m.push_back("vocab.target.tags\t" + std::to_string(vocabs.target.tag_count()));
  m.push_back("vocab.tags\t" + std::to_string(vocabs.tags.size()));
  for (const auto& [name, v] : vocabs.source_features)
    m.push_back("vocab.feature." + name + "\t" + std::to_string(v.size()));
  write_lines(in_dir(config.work_dir, "manifest.tsv"), m);
  write_lines(in_dir(config.work_dir, "config.txt"), serialize_config(config));

  for (const auto& [name, c] : result.splits)
    log << name << ": " << c.kept << " of " << c.lines << " sentences kept (" << c.misaligned << " misaligned, "
        << c.too_long << " too long)\n";
  return result;
}

PreparedData load_prepared(const ExperimentConfig& config) {
  const std::string& dir = config.work_dir;
  require_file(in_dir(dir, "manifest.tsv"), "preprocessed data (run preprocess first)");
  PreparedData d;
  d.merges = MergeTable::load(in_dir(dir, "merges.txt"));
  d.vocabs.source = load_vocab(dir, "source");
  d.vocabs.target = load_vocab(dir, "target");
  d.vocabs.tags = load_vocab(dir, "tags");
  for (const auto& name : config.strategy.source_features)
    d.vocabs.source_features[name] = load_vocab(dir, "feature." + name);
  d.model = make_model_config(config.strategy, d.vocabs, config.sizes);
  d.model.init_range = config.init_range;
  d.vocabulary_hashes = vocabulary_hashes(d.vocabs);
  return d;
}

std::vector<EncodedExample> load_examples(const ExperimentConfig& config, const PreparedData& prepared,
                                          const std::string& split) {
  (void)prepared;
  const std::string& dir = config.work_dir;
  const auto src = read_ids(in_dir(dir, split + ".src.ids"));
  const auto tgt = read_ids(in_dir(dir, split + ".tgt.ids"));
  if (src.size() != tgt.size()) throw std::runtime_error(split + ": source and target id files differ in length");
  std::map<std::string, std::vector<std::vector<int>>> feats;
  for (const auto& name : config.strategy.source_features)
    feats[name] = read_ids(in_dir(dir, split + ".feature." + name + ".ids"));
  std::vector<std::vector<int>> tags;
  if (config.strategy.mode == Strategy::multitask) tags = read_ids(in_dir(dir, split + ".tag.ids"));

  std::vector<EncodedExample> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i].source[kWordFeature] = src[i];
    for (const auto& [name, rows] : feats) out[i].source[name] = rows.at(i);
    out[i].targets.push_back(tgt[i]);
    if (!tags.empty()) out[i].targets.push_back(tags.at(i));
  }
  return out;
}

std::vector<Sentence> load_references(const ExperimentConfig& config, const std::string& split) {
  return read_sentences(in_dir(config.work_dir, split + ".ref"));
}

TrainSummary run_train(const ExperimentConfig& config, std::ostream& log) {
  const PreparedData prepared = load_prepared(config);
  TrainingData data;
  data.train = load_examples(config, prepared, "train");
  data.dev = load_examples(config, prepared, "dev");
  data.dev_references = load_references(config, "dev");
  data.target_vocab = &prepared.vocabs.target;

  const std::string train_dir = in_dir(config.work_dir, "train");
  fs::create_directories(train_dir);
  TrainingSchedule schedule = config.schedule;
  schedule.seed = sub_seed(config.seed, "shuffle");

  TrainerOptions options;
  options.output_dir = train_dir;
  options.decode_max_len = config.max_decode_length();
  options.vocabulary_hashes = prepared.vocabulary_hashes;
  options.metadata["strategy"] = to_string(config.strategy.mode);
  options.tag_loss_weight = config.strategy.tag_loss_weight;
  options.on_validation = [&log](const ValidationRecord& r) {
    log << "batch " << r.batch << " epoch " << r.epoch << " loss " << r.train_loss << " dev BLEU " << r.dev_bleu
        << (r.checkpoint.empty() ? "" : " (kept)") << '\n';
  };

  TrainSummary summary;
  summary.result = train(prepared.model, init_parameters(prepared.model, sub_seed(config.seed, "init")), data,
                         schedule, config.adam, options);

  std::vector<std::string> log_lines;
  for (const auto& r : summary.result.log) log_lines.push_back(r.to_tsv());
  write_lines(in_dir(train_dir, "train.log.tsv"), log_lines);
  for (const auto& r : summary.result.retained) summary.checkpoints.push_back(r.path);
  std::vector<std::string> names;
  for (const auto& p : summary.checkpoints) names.push_back(fs::path(p).filename().string());
  write_lines(in_dir(train_dir, "checkpoints.txt"), names);

  Checkpoint last{prepared.model, summary.result.final_params, prepared.vocabulary_hashes, options.metadata};
  last.metadata["batch"] = std::to_string(summary.result.batches);
  save_checkpoint(last, in_dir(train_dir, "final.ckpt"));
  log << "trained " << summary.result.batches << " batches over " << summary.result.epochs << " epoch(s)"
      << (summary.result.stopped_early ? ", stopped early" : "") << '\n';
  return summary;
}

std::vector<std::map<std::string, std::vector<int>>> encode_sources(
    const ExperimentConfig& config, const PreparedData& prepared, const std::vector<std::string>& source_lines,
    const std::map<std::string, std::vector<std::string>>& feature_lines) {
  const StrategyConfig& strategy = config.strategy;
  for (const auto& name : file_features(strategy)) {
    auto it = feature_lines.find(name);
    if (it == feature_lines.end()) throw std::invalid_argument("no input for source feature '" + name + "'");
    if (it->second.size() != source_lines.size())
      throw std::invalid_argument("source feature '" + name + "' has a different number of lines");
  }
  std::vector<std::map<std::string, std::vector<int>>> out(source_lines.size());
  for (std::size_t i = 0; i < source_lines.size(); ++i) {
    AnnotatedSentencePair pair;
    pair.src_words = split_tokens(source_lines[i]);
    if (pair.src_words.empty()) continue;
    for (const auto& name : file_features(strategy)) pair.src_features[name] = split_tokens(feature_lines.at(name)[i]);
    if (auto problem = pair.alignment_problem())
      throw std::invalid_argument("input line " + std::to_string(i + 1) + ": " + *problem);
    const SegmentedPair seg = segment_pair(pair, prepared.merges, strategy.uses_iob());
    out[i][kWordFeature] = prepared.vocabs.source.encode(seg.src_units);
    for (const auto& name : strategy.source_features)
      out[i][name] = prepared.vocabs.source_features.at(name).encode(seg.src_features.at(name));
  }
  return out;
}

TranslateResult run_translate(const ExperimentConfig& config, const TranslateRequest& request, std::ostream& log) {
  const PreparedData prepared = load_prepared(config);
  const std::string& dir = config.work_dir;

  std::string source = request.source;
  std::map<std::string, std::string> feature_paths = request.features;
  if (source.empty()) {
    source = in_dir(dir, "test.src.txt");
    for (const auto& name : file_features(config.strategy))
      feature_paths.try_emplace(name, in_dir(dir, "test.feature." + name + ".txt"));
  }
  require_file(source, "translation input");
  const auto lines = read_lines(source);
  std::map<std::string, std::vector<std::string>> feature_lines;
  for (const auto& [name, path] : feature_paths) feature_lines[name] = read_lines(path);
  const auto inputs = encode_sources(config, prepared, lines, feature_lines);

  std::vector<std::string> models = request.models;
  if (models.empty()) {
    const auto listed = read_lines(in_dir(dir, "train/checkpoints.txt"));
    for (std::size_t i = 0; i < listed.size() && i < std::max<std::size_t>(1, config.ensemble_size); ++i)
      models.push_back(in_dir(in_dir(dir, "train"), listed[i]));
    if (models.empty()) throw std::runtime_error("no retained checkpoints in " + in_dir(dir, "train"));
  }
  EnsembleSpec words = load_ensemble(models, 0);
  for (const auto& m : words.members)
    if (m.vocabulary_hashes != prepared.vocabulary_hashes)
      throw std::runtime_error("checkpoint vocabularies do not match the preprocessed data in " + dir);
  const bool multitask_tags = words.members[0].config.decoders.size() > 1;
  EnsembleSpec tag_models;
  if (multitask_tags) {
    tag_models = words;
    tag_models.decoder = 1;
    tag_models.validate();
  }
  const bool predicts_tags = multitask_tags || prepared.vocabs.target.tag_count() > 0;
  const auto word_views = words.views();
  const auto tag_views = multitask_tags ? tag_models.views() : std::vector<ModelView>{};

  SearchOptions search;
  search.beam = config.beam;
  search.max_len = config.max_decode_length();

  TranslateResult result;
  result.translations.resize(inputs.size());
  std::vector<std::size_t> violations(inputs.size(), 0);
  result.tags.resize(inputs.size());
  auto decode_one = [&](std::size_t i) {
    if (inputs[i].empty()) return;
    const SourceBatch src = single_source(inputs[i]);
    const Hypothesis best = beam_search(src, word_views, search).best;
    result.translations[i] = postprocess(best.tokens, prepared.vocabs.target);
    if (multitask_tags) {
      SearchOptions tag_search = search;
      tag_search.max_len = config.decode_max_len;
      const Hypothesis tags = beam_search(src, tag_views, tag_search).best;
      result.tags[i] = join_tokens(extract_predicted_tags(tags.tokens, prepared.vocabs.tags));
    } else if (predicts_tags) {
      result.tags[i] = join_tokens(extract_predicted_tags(best.tokens, prepared.vocabs.target));
      violations[i] = alternation_violations(best.tokens, prepared.vocabs.target);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(request.threads, static_cast<unsigned>(inputs.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) decode_one(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < inputs.size(); i += threads) decode_one(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t v : violations) result.alternation_violations += v;
  if (predicts_tags && !multitask_tags)
    log << "tag/word alternation violations: " << result.alternation_violations << '\n';

  std::vector<std::size_t> empty_lines;
  for (std::size_t i = 0; i < result.translations.size(); ++i)
    if (result.translations[i].empty()) empty_lines.push_back(i + 1);
  result.empty_outputs = empty_lines.size();
  if (!empty_lines.empty()) {
    log << "warning: " << empty_lines.size() << " empty translation(s), input line(s)";
    for (std::size_t k = 0; k < empty_lines.size() && k < 10; ++k) log << ' ' << empty_lines[k];
    log << (empty_lines.size() > 10 ? " ...\n" : "\n");
  }

  result.output_path = request.output.empty() ? in_dir(dir, "test.hyp") : request.output;
  write_lines(result.output_path, result.translations);
  if (predicts_tags) {
    result.tags_path = request.tags_output.empty() ? result.output_path + ".tags" : request.tags_output;
    write_lines(result.tags_path, result.tags);
  }
  log << "translated " << inputs.size() << " sentence(s) with " << models.size() << " model(s) to "
      << result.output_path << '\n';
  return result;
}

EvaluationReport run_score(const ExperimentConfig& config, const ScoreRequest& request) {
  require_file(request.hypotheses, "hypothesis file");
  require_file(request.references, "reference file");
  const auto hyps = read_sentences(request.hypotheses);
  const auto refs = read_sentences(request.references);
  EvaluationReport report;
  report.sentences = refs.size();
  report.corpus_system = corpus_bleu(hyps, refs);
  report.corpus_baseline = report.corpus_system;
  if (!request.baseline.empty()) {
    require_file(request.baseline, "baseline file");
    const auto base = read_sentences(request.baseline);
    report.corpus_baseline = corpus_bleu(base, refs);
    report.significance =
        bootstrap_significance(base, hyps, refs, config.resamples, sub_seed(config.seed, "bootstrap"));
  }
  return report;
}

EvaluationReport run_analyze(const ExperimentConfig& config, const AnalyzeRequest& request) {
  require_file(request.system, "system output");
  require_file(request.baseline, "baseline output");
  require_file(request.references, "reference file");
  require_file(request.reference_tags, "reference supertag file");
  require_file(request.source, "source file");
  const auto sys = read_sentences(request.system);
  const auto base = read_sentences(request.baseline);
  const auto refs = read_sentences(request.references);
  const auto ref_tags = read_sentences(request.reference_tags);
  const auto src = read_sentences(request.source);
  if (ref_tags.size() != refs.size() || src.size() != refs.size())
    throw std::invalid_argument("analyze: source, references and reference tags must have the same line count");

  const MergeTable merges = MergeTable::load(in_dir(config.work_dir, "merges.txt"));
  std::vector<std::size_t> lengths;
  for (const auto& words : src) {
    std::size_t n = 0;
    for (const auto& units : apply_bpe_words(words, merges)) n += units.size();
    lengths.push_back(std::max<std::size_t>(n, 1));
  }

  const ConstructRules rules =
      config.construct_rules.empty() ? ConstructRules::defaults() : ConstructRules::load(config.construct_rules);
  std::vector<SubsetSpec> subsets;
  for (auto s : construct_subsets(ref_tags, rules)) {
    s.name = "construct/" + s.name;
    subsets.push_back(std::move(s));
  }
  for (auto s : length_subsets(lengths)) {
    s.name = "length/" + s.name;
    subsets.push_back(std::move(s));
  }
  EvaluationReport report = breakdown_report(sys, base, refs, subsets);
  report.significance = bootstrap_significance(base, sys, refs, config.resamples, sub_seed(config.seed, "bootstrap"));
  if (!request.predicted_tags.empty()) {
    require_file(request.predicted_tags, "predicted tag file");
    report.tags = tag_accuracy(read_sentences(request.predicted_tags), ref_tags);
  }
  if (!request.output_prefix.empty()) {
    write_text(request.output_prefix + ".txt", report.to_text());
    write_text(request.output_prefix + ".tsv", report.to_tsv());
  }
  return report;
}

}  // namespace snmt
