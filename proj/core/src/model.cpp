#include "snmt/model.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <stdexcept>

namespace snmt {

namespace {

constexpr double kMaskValue = -1e30;

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "b" || leaf == "bx";
}

void add_gru(std::vector<std::pair<std::string, std::vector<std::size_t>>>& out,
             const std::string& prefix, std::size_t input, std::size_t hidden) {
  out.push_back({prefix + ".Wx", {input, 3 * hidden}});
  out.push_back({prefix + ".bx", {1, 3 * hidden}});
  out.push_back({prefix + ".Urz", {hidden, 2 * hidden}});
  out.push_back({prefix + ".Uh", {hidden, hidden}});
}

/// GRU update given the precomputed input projection x*Wx + bx (B x 3H).
Var gru_cell(BoundParameters& p, const std::string& prefix, Var input_proj, Var state,
             std::size_t hidden) {
  const std::size_t h = hidden;
  Var recurrent = matmul(state, p[prefix + ".Urz"]);
  Var reset = sigmoid(add(slice(input_proj, 1, 0, h), slice(recurrent, 1, 0, h)));
  Var update = sigmoid(add(slice(input_proj, 1, h, 2 * h), slice(recurrent, 1, h, 2 * h)));
  Var candidate =
      tanh(add(slice(input_proj, 1, 2 * h, 3 * h), matmul(mul(reset, state), p[prefix + ".Uh"])));
  // (1 - z) * s + z * candidate
  return add(state, mul(update, sub(candidate, state)));
}

Var project(BoundParameters& p, const std::string& prefix, Var x) {
  return add(matmul(x, p[prefix + ".Wx"]), p[prefix + ".bx"]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::size_t EmbeddingSpec::total_width() const {
  std::size_t w = 0;
  for (const auto& f : features) w += f.width;
  return w;
}

const FeatureEmbedding* EmbeddingSpec::find(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return &f;
  return nullptr;
}

void EmbeddingSpec::validate() const {
  if (features.empty()) throw std::invalid_argument("embedding spec: no source features");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (f.width == 0) throw std::invalid_argument("embedding spec: feature '" + f.name + "' has zero width");
    if (f.vocab_size == 0) throw std::invalid_argument("embedding spec: feature '" + f.name + "' has empty vocabulary");
    for (std::size_t j = 0; j < i; ++j)
      if (features[j].name == f.name) throw std::invalid_argument("embedding spec: duplicate feature '" + f.name + "'");
  }
}

void ModelConfig::validate() const {
  source.validate();
  if (decoders.empty()) throw std::invalid_argument("model config: no decoder");
  if (hidden == 0 || attention == 0 || output_width == 0)
    throw std::invalid_argument("model config: sizes must be positive");
  for (const auto& d : decoders) {
    if (d.vocab_size == 0 || d.embed_width == 0)
      throw std::invalid_argument("model config: decoder '" + d.prefix + "' has zero size");
    for (const auto& other : decoders)
      if (&other != &d && other.prefix == d.prefix)
        throw std::invalid_argument("model config: duplicate decoder prefix '" + d.prefix + "'");
  }
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(const ModelConfig& config) {
  config.validate();
  const std::size_t h = config.hidden;
  const std::size_t a = config.attention;
  const std::size_t o = config.output_width;
  const std::size_t e = config.source.total_width();

  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  for (const auto& f : config.source.features) out.push_back({"src.emb." + f.name, {f.vocab_size, f.width}});
  add_gru(out, "enc.fwd", e, h);
  add_gru(out, "enc.bwd", e, h);
  for (const auto& d : config.decoders) {
    const std::string& p = d.prefix;
    out.push_back({p + ".emb", {d.vocab_size, d.embed_width}});
    out.push_back({p + ".init.W", {2 * h, h}});
    out.push_back({p + ".init.b", {1, h}});
    add_gru(out, p + ".gru1", d.embed_width, h);
    out.push_back({p + ".att.U", {2 * h, a}});
    out.push_back({p + ".att.b", {1, a}});
    out.push_back({p + ".att.W", {h, a}});
    out.push_back({p + ".att.v", {a, 1}});
    add_gru(out, p + ".gru2", 2 * h, h);
    out.push_back({p + ".out.Wy", {d.embed_width, o}});
    out.push_back({p + ".out.Ws", {h, o}});
    out.push_back({p + ".out.Wc", {2 * h, o}});
    out.push_back({p + ".out.b", {1, o}});
    out.push_back({p + ".out.Wo", {o, d.vocab_size}});
  }
  return out;
}

ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed) {
  auto shapes = parameter_shapes(config);
  std::sort(shapes.begin(), shapes.end());
  std::mt19937_64 rng(seed);
  ParameterSet params;
  for (const auto& [name, shape] : shapes) {
    Tensor t(shape, 0.0);
    if (!is_bias(name)) {
      for (double& v : t.values()) {
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (2.0 * unit - 1.0) * config.init_range;
      }
    }
    params.set(name, std::move(t));
  }
  return params;
}

// ---------------------------------------------------------------------------
// ParameterSet / binding

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

Var BoundParameters::operator[](const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  Var v = tape_->parameter(params_->at(name), name);
  bound_.emplace(name, v);
  return v;
}

void BoundParameters::bind(const std::string& name, Var v) {
  if (!params_->contains(name)) throw std::out_of_range("unknown parameter '" + name + "'");
  bound_[name] = v;
}

ParameterSet BoundParameters::gradients(const GradientMap& grads) const {
  ParameterSet out;
  for (const auto& [name, value] : *params_) {
    auto it = bound_.find(name);
    if (it == bound_.end()) {
      out.set(name, Tensor(value.shape(), 0.0));
      continue;
    }
    out.set(name, grads.at(it->second.id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batches

PaddedBatch PaddedBatch::from_sequences(std::span<const std::vector<int>> sequences) {
  PaddedBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) b.length = std::max(b.length, s.size());
  b.ids.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    b.lengths.push_back(sequences[i].size());
    for (std::size_t t = 0; t < sequences[i].size(); ++t) b.ids[t * b.batch + i] = sequences[i][t];
  }
  return b;
}

std::vector<int> PaddedBatch::row(std::size_t t) const {
  return std::vector<int>(ids.begin() + static_cast<long>(t * batch),
                          ids.begin() + static_cast<long>((t + 1) * batch));
}

// ---------------------------------------------------------------------------
// Encoder

Var embed_source(BoundParameters& params, const EmbeddingSpec& spec, const SourceBatch& source) {
  for (const auto& [name, batch] : source)
    if (!spec.find(name)) throw std::invalid_argument("embed_source: unknown feature '" + name + "'");
  std::vector<Var> parts;
  const PaddedBatch* first = nullptr;
  for (const auto& f : spec.features) {
    auto it = source.find(f.name);
    if (it == source.end()) throw std::invalid_argument("embed_source: missing feature '" + f.name + "'");
    const PaddedBatch& b = it->second;
    if (first && (b.lengths != first->lengths))
      throw std::invalid_argument("embed_source: feature '" + f.name + "' has different lengths");
    first = &b;
    parts.push_back(embedding_lookup(params["src.emb." + f.name], b.ids));
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 1);
}

EncoderStates encode(BoundParameters& params, const ModelConfig& config, Var embedded,
                     std::span<const std::size_t> lengths, std::size_t batch) {
  Tape& tape = params.tape();
  const std::size_t h = config.hidden;
  const std::size_t rows = embedded.value().rows();
  if (batch == 0 || rows == 0 || rows % batch != 0 || lengths.size() != batch)
    throw ShapeError("encode: embedded rows do not match the batch");
  const std::size_t length = rows / batch;
  for (std::size_t len : lengths)
    if (len == 0 || len > length) throw std::invalid_argument("encode: empty or overlong source");

  auto step_mask = [&](std::size_t t) -> std::optional<Var> {
    bool all = true;
    Tensor m = Tensor::matrix(batch, h);
    for (std::size_t b = 0; b < batch; ++b) {
      const bool valid = t < lengths[b];
      all = all && valid;
      if (valid)
        for (std::size_t c = 0; c < h; ++c) m(b, c) = 1.0;
    }
    if (all) return std::nullopt;
    return tape.constant(std::move(m));
  };

  std::vector<std::optional<Var>> masks;
  for (std::size_t t = 0; t < length; ++t) masks.push_back(step_mask(t));

  auto run = [&](const std::string& prefix, bool reverse) {
    Var proj = project(params, prefix, embedded);
    Var state = tape.constant(Tensor::matrix(batch, h));
    std::vector<Var> out(length);
    for (std::size_t k = 0; k < length; ++k) {
      const std::size_t t = reverse ? length - 1 - k : k;
      Var next = gru_cell(params, prefix, slice(proj, 0, t * batch, (t + 1) * batch), state, h);
      if (masks[t]) next = add(state, mul(*masks[t], sub(next, state)));
      state = next;
      out[t] = state;
    }
    return out;
  };

  const auto fwd = run("enc.fwd", false);
  const auto bwd = run("enc.bwd", true);
  std::vector<Var> rows_per_position;
  rows_per_position.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const Var pair[] = {fwd[t], bwd[t]};
    rows_per_position.push_back(concat(pair, 1));
  }

  EncoderStates enc;
  enc.states = length == 1 ? rows_per_position[0] : concat(rows_per_position, 0);
  enc.length = length;
  enc.batch = batch;
  enc.lengths.assign(lengths.begin(), lengths.end());
  enc.mask = Tensor::matrix(batch, length);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = lengths[b]; t < length; ++t) enc.mask(b, t) = kMaskValue;
  return enc;
}

EncoderStates encode_source(BoundParameters& params, const ModelConfig& config,
                            const SourceBatch& source) {
  if (source.empty()) throw std::invalid_argument("encode_source: empty source batch");
  const PaddedBatch& first = source.begin()->second;
  Var embedded = embed_source(params, config.source, source);
  return encode(params, config, embedded, first.lengths, first.batch);
}

// ---------------------------------------------------------------------------
// Decoder

DecoderContext prepare_decoder(BoundParameters& params, const ModelConfig& config,
                               const DecoderSpec& decoder, const EncoderStates& encoder) {
  Tape& tape = params.tape();
  const std::string& p = decoder.prefix;
  DecoderContext ctx;
  ctx.spec = &decoder;
  ctx.encoder = encoder;
  ctx.keys = add(matmul(encoder.states, params[p + ".att.U"]), params[p + ".att.b"]);
  ctx.mask = tape.constant(encoder.mask);

  Tensor pool = Tensor::matrix(encoder.batch, encoder.length);
  for (std::size_t b = 0; b < encoder.batch; ++b)
    for (std::size_t t = 0; t < encoder.lengths[b]; ++t)
      pool(b, t) = 1.0 / static_cast<double>(encoder.lengths[b]);
  Var mean = block_weighted_sum(tape.constant(std::move(pool)), encoder.states);
  ctx.initial_state = tanh(add(matmul(mean, params[p + ".init.W"]), params[p + ".init.b"]));
  (void)config;
  return ctx;
}

DecoderContext tile_context(BoundParameters& params, const ModelConfig& config,
                            const DecoderContext& single, std::size_t copies) {
  (void)config;
  if (single.encoder.batch != 1) throw std::invalid_argument("tile_context: expects a single sentence");
  Tape& tape = params.tape();
  const std::size_t len = single.encoder.length;

  auto tile_rows = [&](const Tensor& src) {
    // src is len x n (position-major with batch 1); output is (len*copies) x n.
    const std::size_t n = src.cols();
    Tensor out = Tensor::matrix(len * copies, n);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t k = 0; k < copies; ++k)
        std::copy_n(src.values().begin() + static_cast<long>(t * n), n,
                    out.values().begin() + static_cast<long>((t * copies + k) * n));
    return out;
  };
  auto repeat = [&](const Tensor& row) {
    Tensor out = Tensor::matrix(copies, row.cols());
    for (std::size_t k = 0; k < copies; ++k)
      std::copy_n(row.values().begin(), row.cols(), out.values().begin() + static_cast<long>(k * row.cols()));
    return out;
  };

  DecoderContext ctx;
  ctx.spec = single.spec;
  ctx.encoder.length = len;
  ctx.encoder.batch = copies;
  ctx.encoder.lengths.assign(copies, single.encoder.lengths[0]);
  ctx.encoder.mask = repeat(single.encoder.mask);
  ctx.encoder.states = tape.constant(tile_rows(single.encoder.states.value()));
  ctx.keys = tape.constant(tile_rows(single.keys.value()));
  ctx.mask = tape.constant(ctx.encoder.mask);
  ctx.initial_state = tape.constant(repeat(single.initial_state.value()));
  return ctx;
}

AttentionOutput attention(BoundParameters& params, const DecoderContext& context, Var query) {
  const std::string& p = context.spec->prefix;
  const std::size_t len = context.encoder.length;
  const std::size_t batch = context.encoder.batch;
  Var projected = matmul(query, params[p + ".att.W"]);
  Var hidden = tanh(add_tiled(context.keys, projected));
  Var energies = matmul(hidden, params[p + ".att.v"]);  // (T*B) x 1
  Var scores = transpose(reshape(energies, len, batch));
  AttentionOutput out;
  out.weights = softmax_rows(add(scores, context.mask));
  out.context = block_weighted_sum(out.weights, context.encoder.states);
  return out;
}

namespace {

struct StepInputs {
  Var embedding;   // E[y_{j-1}]
  Var gru1_input;  // E[y_{j-1}] Wx + bx
  Var deep_input;  // E[y_{j-1}] W_y
};

DecoderStep step_core(BoundParameters& params, const ModelConfig& config,
                      const DecoderContext& context, const StepInputs& in, Var state) {
  const std::string& p = context.spec->prefix;
  const std::size_t h = config.hidden;
  DecoderStep step;
  step.intermediate = gru_cell(params, p + ".gru1", in.gru1_input, state, h);
  step.attention = attention(params, context, step.intermediate);
  step.state = gru_cell(params, p + ".gru2", project(params, p + ".gru2", step.attention.context),
                        step.intermediate, h);
  Var pre = add(add(in.deep_input, matmul(step.state, params[p + ".out.Ws"])),
                matmul(step.attention.context, params[p + ".out.Wc"]));
  step.output = tanh(add(pre, params[p + ".out.b"]));
  step.logits = matmul(step.output, params[p + ".out.Wo"]);
  return step;
}

}  // namespace

DecoderStep decoder_step(BoundParameters& params, const ModelConfig& config,
                         const DecoderContext& context, std::span<const int> previous, Var state) {
  const std::string& p = context.spec->prefix;
  if (previous.size() != context.encoder.batch)
    throw ShapeError("decoder_step: " + std::to_string(previous.size()) + " inputs for batch of " +
                     std::to_string(context.encoder.batch));
  StepInputs in;
  in.embedding = embedding_lookup(params[p + ".emb"], previous);
  in.gru1_input = project(params, p + ".gru1", in.embedding);
  in.deep_input = matmul(in.embedding, params[p + ".out.Wy"]);
  return step_core(params, config, context, in, state);
}

SequenceLoss decoder_loss(BoundParameters& params, const ModelConfig& config,
                          const DecoderContext& context, const PaddedBatch& targets) {
  const std::string& p = context.spec->prefix;
  const std::size_t batch = context.encoder.batch;
  const std::size_t steps = targets.length;
  if (targets.batch != batch) throw ShapeError("decoder_loss: target batch differs from source batch");
  if (steps == 0) throw std::invalid_argument("decoder_loss: empty targets");

  // Inputs are the gold targets shifted right by one, starting from the start symbol.
  std::vector<int> inputs(steps * batch, kStartSymbol);
  for (std::size_t t = 1; t < steps; ++t)
    for (std::size_t b = 0; b < batch; ++b) inputs[t * batch + b] = targets.at(t - 1, b);

  Var emb = embedding_lookup(params[p + ".emb"], inputs);
  Var gru1_in = project(params, p + ".gru1", emb);
  Var deep_in = matmul(emb, params[p + ".out.Wy"]);

  Var state = context.initial_state;
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    StepInputs in{slice(emb, 0, t * batch, (t + 1) * batch),
                  slice(gru1_in, 0, t * batch, (t + 1) * batch),
                  slice(deep_in, 0, t * batch, (t + 1) * batch)};
    DecoderStep step = step_core(params, config, context, in, state);
    outputs.push_back(step.output);
    state = step.state;
  }

  Var all_outputs = steps == 1 ? outputs[0] : concat(outputs, 0);
  Var log_probs = log_softmax_rows(matmul(all_outputs, params[p + ".out.Wo"]));
  std::vector<int> gold(steps * batch, -1);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < targets.lengths[b]; ++t) gold[t * batch + b] = targets.at(t, b);
  Var picked = pick(log_probs, gold);

  SequenceLoss out;
  out.loss = scale(sum(picked), -1.0);
  out.result.loss = out.loss.value().item();
  out.result.token_log_probs.resize(batch);
  const Tensor& lp = picked.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < targets.lengths[b]; ++t)
      out.result.token_log_probs[b].push_back(lp(t * batch + b, 0));
    out.result.token_count += targets.lengths[b];
  }
  return out;
}

SequenceLoss sequence_loss(BoundParameters& params, const ModelConfig& config,
                           const SourceBatch& source, const PaddedBatch& targets,
                           std::size_t decoder_index) {
  EncoderStates enc = encode_source(params, config, source);
  DecoderContext ctx = prepare_decoder(params, config, config.decoder(decoder_index), enc);
  return decoder_loss(params, config, ctx, targets);
}

}  // namespace snmt
