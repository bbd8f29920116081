#include "tlerc/recurrent.hpp"

#include <algorithm>

namespace tlerc {
namespace {

void require(const ParameterSet& params, const std::string& name, const Shape& shape) {
  if (!params.contains(name)) throw SchemaError("missing parameter " + name);
  if (params.at(name).shape() != shape)
    throw ShapeError("parameter " + name + " has shape " + shape_str(params.at(name).shape()) +
                     ", expected " + shape_str(shape));
}

}  // namespace

void GruParams::init(ParameterSet& params, Rng& rng) const {
  for (const char* gate : {"z", "r", "h"}) {
    params.add(name(std::string("V_") + gate), xavier_uniform(hidden_dim, input_dim, rng));
    params.add(name(std::string("W_") + gate), xavier_uniform(hidden_dim, hidden_dim, rng));
    params.add(name(std::string("b_") + gate), Tensor::zeros({hidden_dim}));
  }
}

void GruParams::validate(const ParameterSet& params) const {
  for (const char* gate : {"z", "r", "h"}) {
    require(params, name(std::string("V_") + gate), {hidden_dim, input_dim});
    require(params, name(std::string("W_") + gate), {hidden_dim, hidden_dim});
    require(params, name(std::string("b_") + gate), {hidden_dim});
  }
}

GruVars bind(Tape& tape, const ParameterSet& params, const GruParams& layout) {
  auto p = [&](const char* local) { return tape.param(params, layout.name(local)); };
  return GruVars{p("V_z"), p("V_r"), p("V_h"), p("W_z"), p("W_r"),
                 p("W_h"), p("b_z"), p("b_r"), p("b_h")};
}

Var gru_step(Var x, Var h_prev, const GruVars& p) {
  using namespace ops;
  const std::size_t hidden = p.W_z.value().rows();
  if (h_prev.size() != hidden || x.size() != p.V_z.value().cols())
    throw ShapeError("gru_step: input " + shape_str(x.shape()) + " / state " +
                     shape_str(h_prev.shape()) + " do not match parameters V" +
                     shape_str(p.V_z.shape()) + " W" + shape_str(p.W_z.shape()));
  Var z = sigmoid(linear(x, p.V_z, p.b_z) + matvec(p.W_z, h_prev));
  Var r = sigmoid(linear(x, p.V_r, p.b_r) + matvec(p.W_r, h_prev));
  Var v = ops::tanh(linear(x, p.V_h, p.b_h) + matvec(p.W_h, h_prev * r));
  // (1 - z) * v + z * h  ==  v + z * (h - v)
  return v + z * (h_prev - v);
}

void ContextParams::init(ParameterSet& params, Rng& rng) const {
  gru.init(params, rng);
  params.add(name("W_p"), xavier_uniform(hidden_dim(), hidden_dim(), rng));
  params.add(name("b_p"), Tensor::zeros({hidden_dim()}));
}

void ContextParams::validate(const ParameterSet& params) const {
  gru.validate(params);
  require(params, name("W_p"), {hidden_dim(), hidden_dim()});
  require(params, name("b_p"), {hidden_dim()});
}

ContextVars bind(Tape& tape, const ParameterSet& params, const ContextParams& layout) {
  return ContextVars{bind(tape, params, layout.gru), tape.param(params, layout.name("W_p")),
                     tape.param(params, layout.name("b_p"))};
}

Var context_step(Var h_enc, Var h_prev, const ContextVars& p) {
  Var h = gru_step(h_enc, h_prev, p.gru);
  return ops::tanh(ops::linear(h, p.W_p, p.b_p));
}

void EncoderParams::init(ParameterSet& params, Rng& rng) const {
  params.add(embedding(), xavier_uniform(vocab_size, embed_dim, rng));
  forward().init(params, rng);
  backward().init(params, rng);
}

EncoderVars bind(Tape& tape, const ParameterSet& params, const EncoderParams& layout) {
  return EncoderVars{tape.param(params, layout.embedding()),
                     bind(tape, params, layout.forward()),
                     bind(tape, params, layout.backward())};
}

Var encode_sentence(std::span<const std::size_t> tokens, const EncoderVars& p,
                    bool mask_padding) {
  std::size_t length = tokens.size();
  if (mask_padding)
    while (length > 0 && tokens[length - 1] == kPad) --length;
  if (length == 0) throw ContractError("encode_sentence: empty token sequence");
  const std::size_t vocab = p.embedding.value().rows();
  for (std::size_t i = 0; i < length; ++i)
    if (tokens[i] >= vocab)
      throw IndexError("encode_sentence: token id " + std::to_string(tokens[i]) +
                       " outside vocabulary of " + std::to_string(vocab));

  Tape& tape = p.embedding.tape();
  const std::size_t hidden = p.forward.W_z.value().rows();
  std::vector<Var> embedded;
  embedded.reserve(length);
  for (std::size_t i = 0; i < length; ++i) embedded.push_back(ops::row(p.embedding, tokens[i]));

  Var fwd = tape.constant(Tensor::zeros({hidden}));
  for (std::size_t i = 0; i < length; ++i) fwd = gru_step(embedded[i], fwd, p.forward);
  Var bwd = tape.constant(Tensor::zeros({hidden}));
  for (std::size_t i = length; i-- > 0;) bwd = gru_step(embedded[i], bwd, p.backward);
  return ops::concat(fwd, bwd);
}

void DecoderParams::init(ParameterSet& params, Rng& rng) const {
  if (shared_embedding.empty()) params.add(embedding(), xavier_uniform(vocab_size, embed_dim, rng));
  gru().init(params, rng);
  params.add(prefix + "/bridge_W", xavier_uniform(hidden_dim, condition_dim, rng));
  params.add(prefix + "/bridge_b", Tensor::zeros({hidden_dim}));
  params.add(prefix + "/out_W", xavier_uniform(vocab_size, hidden_dim, rng));
  params.add(prefix + "/out_b", Tensor::zeros({vocab_size}));
}

DecoderVars bind(Tape& tape, const ParameterSet& params, const DecoderParams& layout) {
  return DecoderVars{tape.param(params, layout.embedding()),
                     bind(tape, params, layout.gru()),
                     tape.param(params, layout.prefix + "/bridge_W"),
                     tape.param(params, layout.prefix + "/bridge_b"),
                     tape.param(params, layout.prefix + "/out_W"),
                     tape.param(params, layout.prefix + "/out_b")};
}

Var decoder_initial_state(Var condition, const DecoderVars& p) {
  return ops::tanh(ops::linear(condition, p.bridge_W, p.bridge_b));
}

Var decoder_logits(Var state, const DecoderVars& p) {
  return ops::linear(state, p.out_W, p.out_b);
}

std::vector<Var> decode_teacher_forced(Var condition, std::span<const std::size_t> gold,
                                       const DecoderVars& p) {
  if (gold.size() < 2 || gold.front() != kBos || gold.back() != kEos)
    throw FormatError("decode_teacher_forced: gold sequence must start with BOS and end with EOS");
  std::vector<Var> logits;
  logits.reserve(gold.size() - 1);
  Var state = decoder_initial_state(condition, p);
  for (std::size_t i = 0; i + 1 < gold.size(); ++i) {
    state = gru_step(ops::row(p.embedding, gold[i]), state, p.gru);
    logits.push_back(decoder_logits(state, p));
  }
  return logits;
}

Var sequence_nll(Var condition, std::span<const std::size_t> gold, const DecoderVars& p) {
  auto logits = decode_teacher_forced(condition, gold, p);
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    terms.push_back(ops::cross_entropy(logits[i], gold[i + 1]));
  return ops::sum_scalars(terms);
}

namespace {

double selection_score(const Hypothesis& h, bool normalize) {
  if (!normalize || h.tokens.empty()) return h.log_prob;
  return h.log_prob / static_cast<double>(h.tokens.size());
}

struct BeamEntry {
  Hypothesis hyp;
  Var state;
};

}  // namespace

Hypothesis greedy_decode(const Tensor& condition, const ParameterSet& params,
                         const DecoderParams& layout, std::size_t max_len) {
  if (max_len == 0) throw ContractError("greedy_decode: max_len must be >= 1");
  Tape tape(false);
  DecoderVars p = bind(tape, params, layout);
  Var state = decoder_initial_state(tape.constant(condition), p);
  Hypothesis out;
  std::size_t prev = kBos;
  while (out.tokens.size() < max_len) {
    state = gru_step(ops::row(p.embedding, prev), state, p.gru);
    auto lp = log_softmax_values(decoder_logits(state, p).value().data());
    const std::size_t tok = argmax(lp);
    out.tokens.push_back(tok);
    out.log_prob += lp[tok];
    if (tok == kEos) {
      out.finished = true;
      break;
    }
    prev = tok;
  }
  return out;
}

Hypothesis beam_decode(const Tensor& condition, const ParameterSet& params,
                       const DecoderParams& layout, const BeamOptions& options) {
  if (options.beam_width == 0) throw ContractError("beam_decode: beam_width must be >= 1");
  if (options.max_len == 0) throw ContractError("beam_decode: max_len must be >= 1");

  Tape tape(false);
  DecoderVars p = bind(tape, params, layout);
  std::vector<BeamEntry> beam{{Hypothesis{}, decoder_initial_state(tape.constant(condition), p)}};

  for (std::size_t step = 0; step < options.max_len; ++step) {
    std::vector<BeamEntry> candidates;
    for (const BeamEntry& entry : beam) {
      if (entry.hyp.finished) {
        candidates.push_back(entry);
        continue;
      }
      const std::size_t prev = entry.hyp.tokens.empty() ? kBos : entry.hyp.tokens.back();
      Var next = gru_step(ops::row(p.embedding, prev), entry.state, p.gru);
      auto lp = log_softmax_values(decoder_logits(next, p).value().data());
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        BeamEntry child{entry.hyp, next};
        child.hyp.tokens.push_back(tok);
        child.hyp.log_prob += lp[tok];
        child.hyp.finished = tok == kEos;
        candidates.push_back(std::move(child));
      }
    }
    // Pruning always ranks by raw log-probability; a stable sort keeps the
    // generation order (parent order, then token id) among equal scores.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const BeamEntry& a, const BeamEntry& b) {
                       return a.hyp.log_prob > b.hyp.log_prob;
                     });
    if (candidates.size() > options.beam_width) candidates.resize(options.beam_width);
    beam = std::move(candidates);
    if (std::all_of(beam.begin(), beam.end(), [](const BeamEntry& e) { return e.hyp.finished; }))
      break;
  }

  const Hypothesis* best = &beam.front().hyp;
  for (const BeamEntry& e : beam)
    if (selection_score(e.hyp, options.length_normalize) >
        selection_score(*best, options.length_normalize))
      best = &e.hyp;

  Hypothesis greedy = greedy_decode(condition, params, layout, options.max_len);
  if (selection_score(greedy, options.length_normalize) >
      selection_score(*best, options.length_normalize))
    return greedy;
  return *best;
}

}  // namespace tlerc
