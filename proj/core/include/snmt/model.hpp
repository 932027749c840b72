#pragma once

// Attentional encoder-decoder.
//
//   s'_j = GRU1(y_{j-1}, s_{j-1})
//   c_j  = ATT(H, s'_j)                e_i = v' tanh(U h_i + W s'_j + b)
//   s_j  = GRU2(c_j, s'_j)             (the conditional cell)
//   t_j  = tanh(W_y E[y_{j-1}] + W_s s_j + W_c c_j + b_t)
//   p(y_j | ...) = softmax(t_j W_o)
//
// Sequences are batched position-major: row t*B + b holds position t of
// sentence b. The encoder is a bidirectional GRU; H row width is 2*hidden.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snmt/tensor.hpp"

namespace snmt {

struct FeatureEmbedding {
  std::string name;
  std::size_t vocab_size = 0;
  std::size_t width = 0;
};

/// Per-feature source embeddings; rows are concatenated in this order.
struct EmbeddingSpec {
  std::vector<FeatureEmbedding> features;

  std::size_t total_width() const;
  const FeatureEmbedding* find(const std::string& name) const;
  void validate() const;
};

/// One target-side decoder: its parameters live under `prefix`.
struct DecoderSpec {
  std::string prefix = "dec";
  std::size_t vocab_size = 0;
  std::size_t embed_width = 64;
};

struct ModelConfig {
  EmbeddingSpec source;
  std::vector<DecoderSpec> decoders;
  std::size_t hidden = 64;
  std::size_t attention = 64;
  std::size_t output_width = 64;
  double init_range = 0.08;

  void validate() const;
  const DecoderSpec& decoder(std::size_t i = 0) const { return decoders.at(i); }
};

/// Named parameter arrays, ordered by name.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor>;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  void set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }
  std::size_t size() const { return tensors_.size(); }
  std::size_t element_count() const;

  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }
  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }

  bool operator==(const ParameterSet& other) const = default;

 private:
  Map tensors_;
};

/// Name and shape of every parameter the configuration implies.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(const ModelConfig& config);

/// Weights uniform in [-init_range, init_range], biases zero.
ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Binds parameters onto a tape on first use.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterSet& params) : tape_(&tape), params_(&params) {}

  Var operator[](const std::string& name);
  /// Uses an existing tape node for a parameter instead of a fresh leaf.
  void bind(const std::string& name, Var v);
  Tape& tape() const { return *tape_; }
  const ParameterSet& values() const { return *params_; }

  /// Gradient per parameter name; parameters never bound get zeros.
  ParameterSet gradients(const GradientMap& grads) const;

 private:
  Tape* tape_;
  const ParameterSet* params_;
  std::map<std::string, Var> bound_;
};

/// Padded id sequences, position-major.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;
  std::vector<std::size_t> lengths;

  static PaddedBatch from_sequences(std::span<const std::vector<int>> sequences);
  int at(std::size_t t, std::size_t b) const { return ids[t * batch + b]; }
  std::vector<int> row(std::size_t t) const;
};

/// Source streams by feature name; all share the same lengths.
using SourceBatch = std::map<std::string, PaddedBatch>;

struct EncoderStates {
  Var states;  // (T*B) x 2H, position-major
  std::size_t length = 0;
  std::size_t batch = 0;
  std::vector<std::size_t> lengths;
  Tensor mask;  // B x T, 0 on valid positions and a large negative value on padding
};

/// Decoder-specific precomputation over the encoder states.
struct DecoderContext {
  const DecoderSpec* spec = nullptr;
  EncoderStates encoder;
  Var keys;           // U h_i + b for every position
  Var mask;           // constant copy of encoder.mask
  Var initial_state;  // s_0
};

struct AttentionOutput {
  Var context;  // B x 2H
  Var weights;  // B x T
};

struct DecoderStep {
  Var intermediate;  // s'_j
  AttentionOutput attention;
  Var state;   // s_j
  Var output;  // t_j
  Var logits;  // t_j W_o
};

struct LossResult {
  double loss = 0.0;
  std::vector<std::vector<double>> token_log_probs;  // per sentence
  std::size_t token_count = 0;
};

struct SequenceLoss {
  Var loss;
  LossResult result;
};

Var embed_source(BoundParameters& params, const EmbeddingSpec& spec, const SourceBatch& source);

EncoderStates encode(BoundParameters& params, const ModelConfig& config, Var embedded,
                     std::span<const std::size_t> lengths, std::size_t batch);

DecoderContext prepare_decoder(BoundParameters& params, const ModelConfig& config,
                               const DecoderSpec& decoder, const EncoderStates& encoder);

/// Repeats a single-sentence context for `copies` hypotheses. The result
/// holds constants, so no gradient flows through it.
DecoderContext tile_context(BoundParameters& params, const ModelConfig& config,
                            const DecoderContext& single, std::size_t copies);

AttentionOutput attention(BoundParameters& params, const DecoderContext& context, Var query);

DecoderStep decoder_step(BoundParameters& params, const ModelConfig& config,
                         const DecoderContext& context, std::span<const int> previous, Var state);

/// Teacher-forced negative log-likelihood of `targets` (each ending in EOS).
SequenceLoss decoder_loss(BoundParameters& params, const ModelConfig& config,
                          const DecoderContext& context, const PaddedBatch& targets);

/// Embeds, encodes and scores with decoder `decoder_index`.
SequenceLoss sequence_loss(BoundParameters& params, const ModelConfig& config,
                           const SourceBatch& source, const PaddedBatch& targets,
                           std::size_t decoder_index = 0);

EncoderStates encode_source(BoundParameters& params, const ModelConfig& config,
                            const SourceBatch& source);

/// Start symbol fed as y_0.
inline constexpr int kStartSymbol = 2;

}  // namespace snmt
