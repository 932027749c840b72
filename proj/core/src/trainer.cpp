#include "snmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>

#include "snmt/inference.hpp"

namespace snmt {

AdamState AdamState::for_parameters(const ParameterSet& params, const AdamOptions& options) {
  AdamState s;
  s.options = options;
  for (const auto& [name, t] : params) {
    s.m.set(name, Tensor(t.shape(), 0.0));
    s.v.set(name, Tensor(t.shape(), 0.0));
  }
  return s;
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state) {
  for (const auto& [name, g] : grads)
    for (double x : g.values())
      if (!std::isfinite(x)) throw NonFiniteGradient("non-finite gradient in parameter '" + name + "'");

  const AdamOptions& o = state.options;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (auto& [name, theta] : params) {
    const Tensor& g = grads.at(name);
    auto m = state.m.at(name).values();
    auto v = state.v.at(name).values();
    auto p = theta.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gv[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gv[i] * gv[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

double global_norm(const ParameterSet& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.values()) sq += x * x;
  return std::sqrt(sq);
}

double clip_global_norm(ParameterSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.values()) x *= f;
  }
  return norm;
}

void TrainingSchedule::validate() const {
  if (batch_size == 0) throw std::invalid_argument("training schedule: batch size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("training schedule: max epochs must be positive");
  if (best_k == 0) throw std::invalid_argument("training schedule: best-k must be positive");
  if (clip_norm < 0.0) throw std::invalid_argument("training schedule: clip norm must not be negative");
}

std::string ValidationRecord::to_tsv() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << batch << '\t' << epoch << '\t' << train_loss << '\t' << dev_bleu << '\t'
     << (checkpoint.empty() ? "-" : checkpoint);
  return os.str();
}

double validation_bleu(const ModelConfig& config, const ParameterSet& params,
                       std::span<const EncodedExample> dev, std::span<const Sentence> references,
                       const Vocabulary& target_vocab, std::size_t batch_size, std::size_t max_len) {
  if (dev.size() != references.size()) throw std::invalid_argument("validation: dev references are not aligned");
  const ModelView view{&config, &params, 0};
  std::vector<Sentence> hyps;
  hyps.reserve(dev.size());
  for (std::size_t start = 0; start < dev.size(); start += batch_size) {
    const std::size_t end = std::min(dev.size(), start + batch_size);
    ModelBatch batch = collate(dev.subspan(start, end - start));
    for (const auto& ids : greedy_decode(batch.source, std::span(&view, 1), max_len))
      hyps.push_back(postprocess_tokens(ids, target_vocab));
  }
  return corpus_bleu(hyps, references).score;
}

BatchGradient batch_gradient(const ModelConfig& config, const ParameterSet& params, const ModelBatch& batch,
                             double tag_loss_weight) {
  Tape tape;
  BoundParameters bound(tape, params);
  Var loss = training_loss(bound, config, batch, tag_loss_weight);
  BatchGradient out;
  out.loss = loss.value().item();
  for (const auto& t : batch.targets)
    out.tokens += std::accumulate(t.lengths.begin(), t.lengths.end(), std::size_t{0});
  out.grads = bound.gradients(backward(tape, loss));
  return out;
}

namespace {

std::string checkpoint_path(const TrainerOptions& options, std::size_t batch) {
  const std::string file = options.checkpoint_prefix + ".batch" + std::to_string(batch) + ".ckpt";
  return options.output_dir.empty() ? file : (std::filesystem::path(options.output_dir) / file).string();
}

}  // namespace

TrainingResult train(const ModelConfig& config, ParameterSet params, const TrainingData& data,
                     const TrainingSchedule& schedule, const AdamOptions& adam,
                     const TrainerOptions& options) {
  schedule.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training corpus");
  if (data.dev.empty()) throw std::invalid_argument("train: empty development set");
  if (data.target_vocab == nullptr) throw std::invalid_argument("train: no target vocabulary");
  if (!options.output_dir.empty()) std::filesystem::create_directories(options.output_dir);

  TrainingResult result;
  AdamState state = AdamState::for_parameters(params, adam);
  std::mt19937_64 rng(schedule.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_bleu = -1.0;
  std::size_t bad_validations = 0;
  double window_loss = 0.0;
  std::size_t window_tokens = 0;
  bool stop = false;
  std::size_t since_validation = 0;

  auto validate_now = [&](std::size_t epoch) {
    ValidationRecord rec;
    rec.batch = result.batches;
    rec.epoch = epoch;
    rec.train_loss = window_tokens == 0 ? 0.0 : window_loss / static_cast<double>(window_tokens);
    rec.dev_bleu = validation_bleu(config, params, data.dev, data.dev_references, *data.target_vocab,
                                   schedule.batch_size, options.decode_max_len);
    window_loss = 0.0;
    window_tokens = 0;
    since_validation = 0;

    // Best-k retention: the new checkpoint enters if it beats the weakest kept one.
    auto& kept = result.retained;
    const bool enters = kept.size() < schedule.best_k || rec.dev_bleu > kept.back().dev_bleu;
    if (enters) {
      RetainedCheckpoint entry{rec.dev_bleu, rec.batch, checkpoint_path(options, rec.batch)};
      Checkpoint ck{config, params, options.vocabulary_hashes, options.metadata};
      ck.metadata["batch"] = std::to_string(rec.batch);
      if (!options.output_dir.empty()) save_checkpoint(ck, entry.path);
      auto pos = std::upper_bound(kept.begin(), kept.end(), entry,
                                  [](const RetainedCheckpoint& a, const RetainedCheckpoint& b) {
                                    return a.dev_bleu > b.dev_bleu;
                                  });
      kept.insert(pos, entry);
      if (kept.size() > schedule.best_k) {
        if (!options.output_dir.empty()) std::filesystem::remove(kept.back().path);
        kept.pop_back();
      }
      rec.checkpoint = entry.path;
    }

    if (rec.dev_bleu > best_bleu) {
      best_bleu = rec.dev_bleu;
      result.best_params = params;
      bad_validations = 0;
    } else if (++bad_validations > schedule.patience) {
      stop = true;
      result.stopped_early = true;
    }
    result.log.push_back(rec);
    if (options.on_validation) options.on_validation(rec);
  };

  for (std::size_t epoch = 1; epoch <= schedule.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size() && !stop; start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      std::vector<EncodedExample> examples;
      examples.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) examples.push_back(data.train[order[i]]);
      ModelBatch batch = collate(examples);

      BatchGradient bg = batch_gradient(config, params, batch, options.tag_loss_weight);
      if (schedule.clip_norm > 0.0) clip_global_norm(bg.grads, schedule.clip_norm);
      adam_step(params, bg.grads, state);

      ++result.batches;
      ++since_validation;
      window_loss += bg.loss;
      window_tokens += bg.tokens;
      epoch_loss += bg.loss;
      epoch_tokens += bg.tokens;

      if (schedule.valid_interval > 0 && result.batches % schedule.valid_interval == 0) validate_now(epoch);
      if (schedule.max_batches > 0 && result.batches >= schedule.max_batches) stop = true;
    }
    result.epochs = epoch;
    result.epoch_losses.push_back(epoch_tokens == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_tokens));
    if (schedule.valid_interval == 0 && !result.stopped_early) validate_now(epoch);
  }
  if (result.log.empty() || since_validation > 0) {
    if (!result.stopped_early) validate_now(result.epochs);
  }

  result.final_params = std::move(params);
  if (result.best_params.size() == 0) result.best_params = result.final_params;
  return result;
}

}  // namespace snmt
