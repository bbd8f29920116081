#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tlerc/params.hpp"
#include "tlerc/rng.hpp"
#include "tlerc/tape.hpp"

namespace tlerc {

// Reserved vocabulary ids.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;
inline constexpr std::size_t kBos = 2;
inline constexpr std::size_t kEos = 3;
inline constexpr std::size_t kNumSpecial = 4;

using TokenIds = std::vector<std::size_t>;

// GRU parameter group living under `prefix` in a ParameterSet:
//   V_{z,r,h}  hidden x input
//   W_{z,r,h}  hidden x hidden
//   b_{z,r,h}  hidden
struct GruParams {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  std::string name(const std::string& local) const { return prefix + "/" + local; }
  void init(ParameterSet& params, Rng& rng) const;
  // Verifies every tensor exists with the declared shape.
  void validate(const ParameterSet& params) const;
};

struct GruVars {
  Var V_z, V_r, V_h;
  Var W_z, W_r, W_h;
  Var b_z, b_r, b_h;
};

GruVars bind(Tape& tape, const ParameterSet& params, const GruParams& layout);

// One GRU step. The update gate z weighs the previous state:
//   z = sigmoid(V_z x + W_z h + b_z)
//   r = sigmoid(V_r x + W_r h + b_r)
//   v = tanh(V_h x + W_h (h * r) + b_h)
//   h' = (1 - z) * v + z * h
Var gru_step(Var x, Var h_prev, const GruVars& p);

// Context encoder: the GRU above followed by a tanh dense projection
// (W_p, b_p), both under the same prefix. The projected vector is the state
// carried to the next turn.
struct ContextParams {
  GruParams gru;

  std::string name(const std::string& local) const { return gru.name(local); }
  std::size_t hidden_dim() const { return gru.hidden_dim; }
  void init(ParameterSet& params, Rng& rng) const;
  void validate(const ParameterSet& params) const;
};

struct ContextVars {
  GruVars gru;
  Var W_p, b_p;
};

ContextVars bind(Tape& tape, const ParameterSet& params, const ContextParams& layout);
Var context_step(Var h_enc, Var h_prev, const ContextVars& p);

// Bi-directional GRU sentence encoder with its own embedding table. Output
// is [forward final state ; backward final state].
struct EncoderParams {
  std::string prefix = "encoder";
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;

  std::string embedding() const { return prefix + "/embedding"; }
  GruParams forward() const { return {prefix + "/fwd", embed_dim, hidden_dim}; }
  GruParams backward() const { return {prefix + "/bwd", embed_dim, hidden_dim}; }
  std::size_t output_dim() const { return 2 * hidden_dim; }
  void init(ParameterSet& params, Rng& rng) const;
};

struct EncoderVars {
  Var embedding;
  GruVars forward, backward;
};

EncoderVars bind(Tape& tape, const ParameterSet& params, const EncoderParams& layout);

// Trailing kPad tokens are skipped when mask_padding is set.
Var encode_sentence(std::span<const std::size_t> tokens, const EncoderVars& p,
                    bool mask_padding = true);

// Auto-regressive GRU decoder. The conditioning vector enters once, through a
// tanh bridge that produces the initial decoder state.
struct DecoderParams {
  std::string prefix = "decoder";
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t condition_dim = 0;
  // When non-empty, the decoder reads token embeddings from this tensor
  // instead of owning one.
  std::string shared_embedding;

  std::string embedding() const {
    return shared_embedding.empty() ? prefix + "/embedding" : shared_embedding;
  }
  GruParams gru() const { return {prefix, embed_dim, hidden_dim}; }
  void init(ParameterSet& params, Rng& rng) const;
};

struct DecoderVars {
  Var embedding;
  GruVars gru;
  Var bridge_W, bridge_b;
  Var out_W, out_b;
};

DecoderVars bind(Tape& tape, const ParameterSet& params, const DecoderParams& layout);

Var decoder_initial_state(Var condition, const DecoderVars& p);
// Output logits from a decoder state.
Var decoder_logits(Var state, const DecoderVars& p);

// Teacher forcing over gold = [BOS, ..., EOS]. Returns one logit vector per
// predicted position (gold.size() - 1 of them); position i predicts gold[i+1].
std::vector<Var> decode_teacher_forced(Var condition, std::span<const std::size_t> gold,
                                       const DecoderVars& p);

// Summed token negative log-likelihood of gold under teacher forcing.
Var sequence_nll(Var condition, std::span<const std::size_t> gold, const DecoderVars& p);

struct Hypothesis {
  TokenIds tokens;  // generated tokens, BOS excluded, EOS included if emitted
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamOptions {
  std::size_t beam_width = 4;
  std::size_t max_len = 30;
  bool length_normalize = false;
};

// Beam search from the conditioning vector. Finished hypotheses keep
// competing for beam slots; ties resolve toward the lower token id. The
// greedy path is scored alongside and returned when it beats the beam.
Hypothesis beam_decode(const Tensor& condition, const ParameterSet& params,
                       const DecoderParams& layout, const BeamOptions& options);

Hypothesis greedy_decode(const Tensor& condition, const ParameterSet& params,
                         const DecoderParams& layout, std::size_t max_len);

}  // namespace tlerc
