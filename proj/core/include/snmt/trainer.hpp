#pragma once

// Minibatch training: Adam updates with optional global-norm clipping,
// periodic greedy validation scored with BLEU, early stopping on dev BLEU
// and retention of the best-k checkpoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snmt/checkpoint.hpp"
#include "snmt/evaluation.hpp"
#include "snmt/model.hpp"
#include "snmt/strategies.hpp"
#include "snmt/vocabulary.hpp"

namespace snmt {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamOptions&) const = default;
};

struct AdamState {
  AdamOptions options;
  ParameterSet m;
  ParameterSet v;
  std::size_t t = 0;

  static AdamState for_parameters(const ParameterSet& params, const AdamOptions& options = {});
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). A non-finite gradient
/// aborts the update before anything is modified.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

double global_norm(const ParameterSet& grads);
/// Rescales grads so their global norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(ParameterSet& grads, double max_norm);

struct TrainingSchedule {
  std::size_t batch_size = 60;
  std::size_t max_epochs = 30;
  /// Batches between validations; 0 validates once per epoch.
  std::size_t valid_interval = 0;
  /// Validations without a dev-BLEU improvement tolerated before stopping.
  std::size_t patience = 10;
  std::size_t best_k = 4;
  /// Hard cap on updates; 0 means no cap.
  std::size_t max_batches = 0;
  /// Global-norm clipping threshold; 0 disables clipping.
  double clip_norm = 1.0;
  std::uint64_t seed = 1;

  void validate() const;

  bool operator==(const TrainingSchedule&) const = default;
};

struct ValidationRecord {
  std::size_t batch = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per target token since the previous validation
  double dev_bleu = 0.0;
  std::string checkpoint;  // empty when not retained

  std::string to_tsv() const;
};

struct RetainedCheckpoint {
  double dev_bleu = 0.0;
  std::size_t batch = 0;
  std::string path;
};

struct TrainingData {
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> dev;
  /// Dev references as final (BPE-joined, tag-free) tokens.
  std::vector<Sentence> dev_references;
  const Vocabulary* target_vocab = nullptr;
};

struct TrainerOptions {
  /// Directory for retained checkpoints; empty keeps them in memory only.
  std::string output_dir;
  std::string checkpoint_prefix = "model";
  std::size_t decode_max_len = 100;
  std::map<std::string, std::uint64_t> vocabulary_hashes;
  std::map<std::string, std::string> metadata;
  double tag_loss_weight = 1.0;
  /// Called after every validation.
  std::function<void(const ValidationRecord&)> on_validation;
};

struct TrainingResult {
  ParameterSet final_params;
  ParameterSet best_params;
  std::vector<ValidationRecord> log;
  /// Highest dev BLEU first; ties keep the earlier checkpoint ahead.
  std::vector<RetainedCheckpoint> retained;
  std::vector<double> epoch_losses;  // mean per-token loss of each completed epoch
  std::size_t batches = 0;
  std::size_t epochs = 0;
  bool stopped_early = false;
};

/// Greedy-decodes the dev set with decoder 0 and scores the stripped,
/// BPE-joined output.
double validation_bleu(const ModelConfig& config, const ParameterSet& params,
                       std::span<const EncodedExample> dev, std::span<const Sentence> references,
                       const Vocabulary& target_vocab, std::size_t batch_size, std::size_t max_len);

/// One forward/backward pass over a batch; returns the loss and gradients.
struct BatchGradient {
  double loss = 0.0;
  std::size_t tokens = 0;
  ParameterSet grads;
};
BatchGradient batch_gradient(const ModelConfig& config, const ParameterSet& params, const ModelBatch& batch,
                             double tag_loss_weight = 1.0);

TrainingResult train(const ModelConfig& config, ParameterSet params, const TrainingData& data,
                     const TrainingSchedule& schedule, const AdamOptions& adam,
                     const TrainerOptions& options);

}  // namespace snmt
