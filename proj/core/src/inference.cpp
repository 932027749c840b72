#include "snmt/inference.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <stdexcept>

#include "snmt/bpe.hpp"
#include "snmt/corpus.hpp"

namespace snmt {

double Hypothesis::score() const {
  return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw std::invalid_argument("ensemble: no members");
  const Checkpoint& first = members[0];
  if (decoder >= first.config.decoders.size())
    throw std::invalid_argument("ensemble: model has no decoder " + std::to_string(decoder));
  for (std::size_t i = 1; i < members.size(); ++i) {
    const Checkpoint& m = members[i];
    if (m.vocabulary_hashes != first.vocabulary_hashes)
      throw std::invalid_argument("ensemble: member " + std::to_string(i) + " uses different vocabularies");
    if (decoder >= m.config.decoders.size() ||
        m.config.decoder(decoder).vocab_size != first.config.decoder(decoder).vocab_size)
      throw std::invalid_argument("ensemble: member " + std::to_string(i) + " has a different output layer");
    if (m.config.source.features.size() != first.config.source.features.size())
      throw std::invalid_argument("ensemble: member " + std::to_string(i) + " has different source features");
    for (std::size_t f = 0; f < m.config.source.features.size(); ++f) {
      const auto& a = m.config.source.features[f];
      const auto& b = first.config.source.features[f];
      if (a.name != b.name || a.vocab_size != b.vocab_size)
        throw std::invalid_argument("ensemble: member " + std::to_string(i) + " has different source features");
    }
  }
}

std::vector<ModelView> EnsembleSpec::views() const {
  std::vector<ModelView> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back({&m.config, &m.params, decoder});
  return out;
}

EnsembleSpec load_ensemble(std::span<const std::string> paths, std::size_t decoder) {
  EnsembleSpec spec;
  spec.decoder = decoder;
  for (const auto& p : paths) spec.members.push_back(load_checkpoint(p));
  spec.validate();
  return spec;
}

SourceBatch single_source(const std::map<std::string, std::vector<int>>& streams) {
  SourceBatch out;
  for (const auto& [name, ids] : streams) {
    std::vector<std::vector<int>> one{ids};
    out[name] = PaddedBatch::from_sequences(one);
  }
  return out;
}

namespace {

// One member's encoder output and its per-step decoder, on a private tape.
class MemberDecoder {
 public:
  MemberDecoder(const ModelView& view, const SourceBatch& source)
      : view_(view), tape_(std::make_unique<Tape>()), params_(*tape_, *view.params) {
    EncoderStates enc = encode_source(params_, *view.config, source);
    base_ = prepare_decoder(params_, *view.config, view.config->decoder(view.decoder), enc);
  }

  std::size_t batch() const { return base_.encoder.batch; }
  std::size_t vocab_size() const { return view_.config->decoder(view_.decoder).vocab_size; }
  const Tensor& initial_state() const { return base_.initial_state.value(); }

  /// One step for `prev.size()` hypotheses; a batch-1 base context is tiled.
  /// Returns log-probabilities and writes the new states.
  Tensor step(std::span<const int> prev, const Tensor& states, Tensor& new_states) {
    const DecoderContext& ctx = context_for(prev.size());
    Var state = tape_->constant(states);
    DecoderStep s = decoder_step(params_, *view_.config, ctx, prev, state);
    new_states = s.state.value();
    return log_softmax_rows(s.logits).value();
  }

 private:
  const DecoderContext& context_for(std::size_t n) {
    if (n == base_.encoder.batch) return base_;
    auto it = tiled_.find(n);
    if (it == tiled_.end()) it = tiled_.emplace(n, tile_context(params_, *view_.config, base_, n)).first;
    return it->second;
  }

  ModelView view_;
  std::unique_ptr<Tape> tape_;
  BoundParameters params_;
  DecoderContext base_;
  std::map<std::size_t, DecoderContext> tiled_;
};

std::vector<std::unique_ptr<MemberDecoder>> make_members(const SourceBatch& source,
                                                         std::span<const ModelView> models) {
  if (models.empty()) throw std::invalid_argument("decode: no models");
  std::vector<std::unique_ptr<MemberDecoder>> out;
  for (const auto& m : models) {
    out.push_back(std::make_unique<MemberDecoder>(m, source));
    if (out.back()->vocab_size() != out.front()->vocab_size())
      throw std::invalid_argument("decode: ensemble members disagree on the output vocabulary");
  }
  return out;
}

// Mean written as a0 + sum(ai - a0) / M: identical members reproduce a0 exactly.
Tensor combine(const std::vector<Tensor>& parts) {
  Tensor out = parts[0];
  if (parts.size() == 1) return out;
  const double m = static_cast<double>(parts.size());
  auto o = out.values();
  for (std::size_t k = 0; k < o.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 1; i < parts.size(); ++i) d += parts[i].values()[k] - parts[0].values()[k];
    o[k] += d / m;
  }
  return out;
}

Tensor stack_rows(const std::vector<const Tensor*>& rows, std::size_t width) {
  Tensor out = Tensor::matrix(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r]->values().begin(), rows[r]->values().end(),
              out.values().begin() + static_cast<long>(r * width));
  return out;
}

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor out = Tensor::matrix(1, m.cols());
  std::copy_n(m.values().begin() + static_cast<long>(r * m.cols()), m.cols(), out.values().begin());
  return out;
}

// Higher score first; then higher log-probability; then lexicographically smaller tokens.
bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.score() != b.score()) return a.score() > b.score();
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

struct LiveHypothesis {
  Hypothesis hyp;
  std::vector<Tensor> states;  // one 1 x H row per member
};

}  // namespace

SearchResult beam_search(const SourceBatch& source, std::span<const ModelView> models,
                         const SearchOptions& options) {
  if (options.beam == 0) throw std::invalid_argument("beam_search: beam must be at least 1");
  if (options.max_len == 0) throw std::invalid_argument("beam_search: max_len must be at least 1");
  auto members = make_members(source, models);
  if (members[0]->batch() != 1) throw std::invalid_argument("beam_search: expects a single sentence");
  const std::size_t vocab = members[0]->vocab_size();
  const std::size_t beam = options.beam;

  SearchResult result;
  std::vector<LiveHypothesis> live(1);
  for (auto& m : members) live[0].states.push_back(m->initial_state());
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < options.max_len && !live.empty() && finished.size() < beam; ++step) {
    const std::size_t n = live.size();
    std::vector<int> prev(n);
    for (std::size_t i = 0; i < n; ++i)
      prev[i] = live[i].hyp.tokens.empty() ? kStartSymbol : live[i].hyp.tokens.back();

    std::vector<Tensor> member_logp, member_states;
    for (std::size_t m = 0; m < members.size(); ++m) {
      std::vector<const Tensor*> rows;
      for (const auto& h : live) rows.push_back(&h.states[m]);
      Tensor states = stack_rows(rows, rows[0]->cols());
      Tensor next;
      member_logp.push_back(members[m]->step(prev, states, next));
      member_states.push_back(std::move(next));
    }
    const Tensor logp = combine(member_logp);

    struct Candidate {
      double total;
      int token;
      std::size_t source;
    };
    std::vector<Candidate> candidates;
    const bool last = step + 1 == options.max_len;
    for (std::size_t i = 0; i < n; ++i) {
      if (last) {
        candidates.push_back({live[i].hyp.log_prob + logp(i, Vocabulary::kEos), Vocabulary::kEos, i});
        continue;
      }
      for (std::size_t v = 0; v < vocab; ++v)
        candidates.push_back({live[i].hyp.log_prob + logp(i, v), static_cast<int>(v), i});
    }
    const std::size_t keep = std::min(candidates.size(), beam - finished.size());
    auto order = [](const Candidate& a, const Candidate& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.token != b.token) return a.token < b.token;
      return a.source < b.source;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep), candidates.end(), order);

    std::vector<LiveHypothesis> next_live;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      const LiveHypothesis& parent = live[cand.source];
      Hypothesis h = parent.hyp;
      const double lp = logp(cand.source, static_cast<std::size_t>(cand.token));
      h.tokens.push_back(cand.token);
      h.step_log_probs.push_back(lp);
      h.log_prob = cand.total;
      if (cand.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      LiveHypothesis lh;
      lh.hyp = std::move(h);
      for (std::size_t m = 0; m < members.size(); ++m) lh.states.push_back(row_of(member_states[m], cand.source));
      next_live.push_back(std::move(lh));
    }
    live = std::move(next_live);
    if (options.record_trace) {
      std::vector<std::vector<int>> prefixes;
      for (const auto& h : live) prefixes.push_back(h.hyp.tokens);
      result.trace.push_back(std::move(prefixes));
    }
  }

  std::sort(finished.begin(), finished.end(), better_finished);
  result.finished = std::move(finished);
  result.best = result.finished.front();
  return result;
}

std::vector<std::vector<int>> greedy_decode(const SourceBatch& source, std::span<const ModelView> models,
                                            std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  auto members = make_members(source, models);
  const std::size_t batch = members[0]->batch();
  const std::size_t vocab = members[0]->vocab_size();

  std::vector<std::vector<int>> out(batch);
  std::vector<Tensor> states;
  for (auto& m : members) states.push_back(m->initial_state());
  std::vector<int> prev(batch, kStartSymbol);
  std::vector<bool> done(batch, false);
  std::size_t remaining = batch;

  for (std::size_t step = 0; step < max_len && remaining > 0; ++step) {
    std::vector<Tensor> member_logp;
    for (std::size_t m = 0; m < members.size(); ++m) {
      Tensor next;
      member_logp.push_back(members[m]->step(prev, states[m], next));
      states[m] = std::move(next);
    }
    const Tensor logp = combine(member_logp);
    const bool last = step + 1 == max_len;
    for (std::size_t b = 0; b < batch; ++b) {
      if (done[b]) {
        prev[b] = Vocabulary::kEos;
        continue;
      }
      int best = Vocabulary::kEos;
      if (!last) {
        best = 0;
        for (std::size_t v = 1; v < vocab; ++v)
          if (logp(b, v) > logp(b, static_cast<std::size_t>(best))) best = static_cast<int>(v);
      }
      out[b].push_back(best);
      prev[b] = best;
      if (best == Vocabulary::kEos) {
        done[b] = true;
        --remaining;
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> next_log_probs(const SourceBatch& source, std::span<const ModelView> models,
                                                std::span<const std::vector<int>> prefixes) {
  auto members = make_members(source, models);
  if (members[0]->batch() != 1) throw std::invalid_argument("next_log_probs: expects a single sentence");
  std::vector<std::vector<double>> out;
  for (const auto& prefix : prefixes) {
    std::vector<Tensor> member_logp;
    for (auto& m : members) {
      Tensor state = m->initial_state();
      int prev = kStartSymbol;
      Tensor logp;
      for (std::size_t t = 0; t <= prefix.size(); ++t) {
        Tensor next;
        const int in[1] = {prev};
        logp = m->step(in, state, next);
        state = std::move(next);
        if (t < prefix.size()) prev = prefix[t];
      }
      member_logp.push_back(std::move(logp));
    }
    const Tensor combined = combine(member_logp);
    out.emplace_back(combined.values().begin(), combined.values().end());
  }
  return out;
}

Hypothesis exhaustive_search(const SourceBatch& source, std::span<const ModelView> models,
                             std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("exhaustive_search: max_len must be at least 1");
  Hypothesis best;
  bool have = false;
  std::vector<Hypothesis> frontier(1);
  for (std::size_t len = 0; len < max_len && !frontier.empty(); ++len) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : frontier) prefixes.push_back(h.tokens);
    const auto dists = next_log_probs(source, models, prefixes);
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto& dist = dists[i];
      Hypothesis end = frontier[i];
      end.tokens.push_back(Vocabulary::kEos);
      end.step_log_probs.push_back(dist[Vocabulary::kEos]);
      end.log_prob += dist[Vocabulary::kEos];
      end.finished = true;
      if (!have || better_finished(end, best)) {
        best = end;
        have = true;
      }
      if (len + 1 == max_len) continue;
      for (std::size_t v = 0; v < dist.size(); ++v) {
        if (static_cast<int>(v) == Vocabulary::kEos) continue;
        Hypothesis h = frontier[i];
        h.tokens.push_back(static_cast<int>(v));
        h.step_log_probs.push_back(dist[v]);
        h.log_prob += dist[v];
        next.push_back(std::move(h));
      }
    }
    frontier = std::move(next);
  }
  return best;
}

// ---------------------------------------------------------------------------

std::vector<std::string> strip_subunits(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kEos || id == Vocabulary::kPad || vocab.is_tag(id)) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<std::string> postprocess_tokens(std::span<const int> ids, const Vocabulary& vocab) {
  return join_subunits(strip_subunits(ids, vocab));
}

std::string postprocess(std::span<const int> ids, const Vocabulary& vocab) {
  return join_tokens(postprocess_tokens(ids, vocab));
}

std::size_t alternation_violations(std::span<const int> ids, const Vocabulary& vocab) {
  std::size_t violations = 0;
  bool pending_tag = false;  // previous token was a tag
  bool inside_word = false;  // previous token was a continuing subunit
  for (int id : ids) {
    if (id == Vocabulary::kEos || id == Vocabulary::kPad) break;
    if (vocab.is_tag(id)) {
      if (pending_tag || inside_word) ++violations;
      pending_tag = true;
      inside_word = false;
      continue;
    }
    if (!inside_word && !pending_tag) ++violations;
    const std::string& tok = vocab.token(id);
    inside_word = !tok.empty() && tok.back() == kContinuation;
    pending_tag = false;
  }
  if (pending_tag || inside_word) ++violations;
  return violations;
}

std::vector<std::string> extract_predicted_tags(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids)
    if (vocab.is_tag(id)) out.push_back(vocab.token(id));
  return out;
}

}  // namespace snmt
