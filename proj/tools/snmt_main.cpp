// snmt: preprocess, train, translate, score and analyze experiments.
//
//   snmt <command> [--config FILE] [--<key> VALUE ...] [--set KEY=VALUE ...]
//
// Every configuration key is also a flag; flags override the file. The
// number of decoding threads comes from SNMT_THREADS.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snmt/config.hpp"
#include "snmt/pipeline.hpp"
#include "snmt/synthetic.hpp"

namespace {

unsigned thread_count() {
  const char* env = std::getenv("SNMT_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const long n = std::stol(env);
    return n > 0 ? static_cast<unsigned>(n) : 1u;
  } catch (const std::exception&) {
    std::cerr << "warning: ignoring SNMT_THREADS=" << env << '\n';
    return 1;
  }
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected KEY=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

struct Common {
  std::string config_path;
  std::map<std::string, std::string> flags;  // key -> value from --<key>
  std::vector<std::string> sets;

  snmt::ExperimentConfig load() const {
    snmt::ExperimentConfig config = config_path.empty() ? snmt::ExperimentConfig{} : snmt::load_config(config_path);
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& [k, v] : flags)
      if (!v.empty()) overrides.emplace_back(k, v);
    for (const auto& s : sets) overrides.push_back(split_assignment(s));
    snmt::apply_overrides(config, overrides);
    return config;
  }
};

void add_common(CLI::App& cmd, Common& common) {
  cmd.add_option("-c,--config", common.config_path, "Experiment configuration file")->check(CLI::ExistingFile);
  cmd.add_option("--set", common.sets, "Override any key, including feature keys: KEY=VALUE");
  for (const auto& key : snmt::config_keys()) cmd.add_option("--" + key, common.flags[key]);
  cmd.add_option("--beam", common.flags["decode.beam"], "Beam width (same as --decode.beam)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-aware neural machine translation"};
  app.require_subcommand(1);

  Common pre, tr, tl, sc, an;
  CLI::App* preprocess = app.add_subcommand("preprocess", "BPE, vocabularies and model-ready corpora");
  add_common(*preprocess, pre);

  CLI::App* train = app.add_subcommand("train", "Train on preprocessed data");
  add_common(*train, tr);

  snmt::TranslateRequest treq;
  std::vector<std::string> feature_inputs;
  CLI::App* translate = app.add_subcommand("translate", "Decode with the retained checkpoints");
  add_common(*translate, tl);
  translate->add_option("-i,--input", treq.source, "Word-level source file (default: preprocessed test split)");
  translate->add_option("--feature", feature_inputs, "Source feature file: NAME=PATH");
  translate->add_option("-o,--output", treq.output, "Translation output file");
  translate->add_option("--tags-output", treq.tags_output, "Predicted supertag output file");
  translate->add_option("-m,--models", treq.models, "Checkpoints to ensemble");

  snmt::ScoreRequest sreq;
  bool score_tsv = false;
  CLI::App* score = app.add_subcommand("score", "Corpus BLEU, optionally with a bootstrap comparison");
  add_common(*score, sc);
  score->add_option("--hyp", sreq.hypotheses, "Hypothesis file")->required();
  score->add_option("--ref", sreq.references, "Reference file")->required();
  score->add_option("--baseline", sreq.baseline, "Baseline hypotheses for significance testing");
  score->add_flag("--tsv", score_tsv, "Tab-separated output");

  snmt::AnalyzeRequest areq;
  bool analyze_tsv = false;
  CLI::App* analyze = app.add_subcommand("analyze", "Per-construct and per-length BLEU breakdown");
  add_common(*analyze, an);
  analyze->add_option("--system", areq.system, "System output")->required();
  analyze->add_option("--baseline", areq.baseline, "Baseline output")->required();
  analyze->add_option("--ref", areq.references, "References (default: <work_dir>/test.ref)");
  analyze->add_option("--ref-tags", areq.reference_tags, "Reference supertags (default: <work_dir>/test.ref.tags)");
  analyze->add_option("--source", areq.source, "Word-level source (default: <work_dir>/test.src.txt)");
  analyze->add_option("--tags", areq.predicted_tags, "Predicted supertags of the system");
  analyze->add_option("-o,--output", areq.output_prefix, "Write <prefix>.txt and <prefix>.tsv");
  analyze->add_flag("--tsv", analyze_tsv, "Tab-separated output on stdout");

  snmt::SyntheticOptions synth;
  std::string synth_dir;
  CLI::App* synthetic = app.add_subcommand("synthetic", "Write the bracket-language corpus");
  synthetic->add_option("-o,--output", synth_dir, "Output directory")->required();
  synthetic->add_option("--seed", synth.seed, "Generator seed");
  synthetic->add_option("--train", synth.train, "Training pairs");
  synthetic->add_option("--dev", synth.dev, "Development pairs");
  synthetic->add_option("--test", synth.test, "Test pairs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*preprocess) {
      snmt::run_preprocess(pre.load(), std::cerr);
    } else if (*train) {
      snmt::run_train(tr.load(), std::cerr);
    } else if (*translate) {
      for (const auto& f : feature_inputs) treq.features.insert(split_assignment(f));
      treq.threads = thread_count();
      snmt::run_translate(tl.load(), treq, std::cerr);
    } else if (*score) {
      const auto report = snmt::run_score(sc.load(), sreq);
      if (score_tsv) {
        std::cout << report.to_tsv();
      } else {
        std::cout << snmt::format_bleu(report.corpus_system) << '\n';
        if (report.significance)
          std::cout << "baseline " << snmt::format_bleu(report.corpus_baseline) << "\np = "
                    << report.significance->p_value << " (" << report.significance->resamples << " resamples)\n";
      }
    } else if (*analyze) {
      const auto config = an.load();
      auto dflt = [&](std::string& v, const std::string& file) {
        if (v.empty()) v = config.work_dir + "/" + file;
      };
      dflt(areq.references, "test.ref");
      dflt(areq.reference_tags, "test.ref.tags");
      dflt(areq.source, "test.src.txt");
      const auto report = snmt::run_analyze(config, areq);
      std::cout << (analyze_tsv ? report.to_tsv() : report.to_text());
    } else if (*synthetic) {
      snmt::write_synthetic(snmt::generate_synthetic(synth), synth_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
