#include <benchmark/benchmark.h>

#include <random>

#include "snmt/evaluation.hpp"
#include "snmt/inference.hpp"
#include "snmt/model.hpp"
#include "snmt/strategies.hpp"
#include "snmt/tensor.hpp"

namespace {

using namespace snmt;

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

ModelConfig bench_config(std::size_t vocab, std::size_t hidden) {
  ModelConfig c;
  c.source.features.push_back({kWordFeature, vocab, hidden});
  c.decoders.push_back({kWordDecoder, vocab, hidden});
  c.hidden = hidden;
  c.attention = hidden;
  c.output_width = hidden;
  return c;
}

SourceBatch random_source(std::mt19937_64& rng, std::size_t batch, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> id(3, static_cast<int>(vocab) - 1);
  std::vector<std::vector<int>> seqs(batch, std::vector<int>(len));
  for (auto& s : seqs)
    for (int& v : s) v = id(rng);
  SourceBatch out;
  out[kWordFeature] = PaddedBatch::from_sequences(seqs);
  return out;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_TrainingStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const ModelConfig config = bench_config(200, hidden);
  const ParameterSet params = init_parameters(config, 1);
  std::mt19937_64 rng(2);
  const SourceBatch src = random_source(rng, 20, 15, 200);
  std::vector<std::vector<int>> tgt(20, std::vector<int>(15, 5));
  for (auto& t : tgt) t.back() = 2;
  const PaddedBatch targets = PaddedBatch::from_sequences(tgt);
  for (auto _ : state) {
    Tape tape;
    BoundParameters bound(tape, params);
    Var loss = sequence_loss(bound, config, src, targets).loss;
    benchmark::DoNotOptimize(bound.gradients(backward(tape, loss)));
  }
}
BENCHMARK(BM_TrainingStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  const ModelConfig config = bench_config(200, 64);
  const ParameterSet params = init_parameters(config, 3);
  const ModelView view{&config, &params, 0};
  std::mt19937_64 rng(4);
  const SourceBatch src = random_source(rng, 1, 15, 200);
  SearchOptions options;
  options.beam = static_cast<std::size_t>(state.range(0));
  options.max_len = 20;
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(src, std::span(&view, 1), options));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_CorpusBleu(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> w(0, 500);
  std::vector<Sentence> hyps(1000), refs(1000);
  for (std::size_t i = 0; i < hyps.size(); ++i)
    for (int k = 0; k < 25; ++k) {
      refs[i].push_back(std::to_string(w(rng)));
      hyps[i].push_back(k % 3 ? refs[i].back() : std::to_string(w(rng)));
    }
  for (auto _ : state) benchmark::DoNotOptimize(corpus_bleu(hyps, refs));
}
BENCHMARK(BM_CorpusBleu)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
