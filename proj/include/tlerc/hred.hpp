#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tlerc/corpus.hpp"
#include "tlerc/optim.hpp"
#include "tlerc/params.hpp"
#include "tlerc/recurrent.hpp"
#include "tlerc/tape.hpp"

namespace tlerc {

struct HredConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t encoder_hidden = 16;
  std::size_t context_hidden = 16;
  std::size_t decoder_hidden = 16;
  std::size_t latent_dim = 0;  // > 0 selects the VHRED variant
  bool share_embedding = false;
  std::size_t max_tokens = 30;
  std::size_t max_turns = 10;

  bool vhred() const { return latent_dim > 0; }
  std::size_t sentence_dim() const { return 2 * encoder_hidden; }
  friend bool operator==(const HredConfig&, const HredConfig&) = default;
};

// Latent prior (part of the context encoder, so it transfers) and the
// posterior used only for ELBO training.
struct VhredParams {
  std::size_t context_dim = 0;
  std::size_t sentence_dim = 0;
  std::size_t latent_dim = 0;

  static std::string prior_mu_W() { return "context/W_mu"; }
  static std::string prior_mu_b() { return "context/b_mu"; }
  static std::string prior_sigma_W() { return "context/W_sigma"; }
  static std::string prior_sigma_b() { return "context/b_sigma"; }
  void init_prior(ParameterSet& params, Rng& rng) const;
  void init_posterior(ParameterSet& params, Rng& rng) const;
};

struct PriorVars {
  Var W_mu, b_mu, W_sigma, b_sigma;
};
PriorVars bind_prior(Tape& tape, const ParameterSet& params);

struct PosteriorVars {
  Var W_mu, b_mu, W_sigma, b_sigma;  // input is [h_cxt ; next sentence vector]
};
PosteriorVars bind_posterior(Tape& tape, const ParameterSet& params);

inline constexpr double kSigmaFloor = 1e-6;

struct LatentSample {
  Var mu, sigma, z;
  Var augmented;  // [h_cxt ; z]
};

// mu = affine(h), sigma = softplus(affine(h)) + 1e-6, z = mu + sigma * eps.
LatentSample vhred_context(Var h_cxt, const PriorVars& prior, std::span<const double> eps);
LatentSample vhred_context(Var h_cxt, const PriorVars& prior, Rng& rng);

// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) for diagonal Gaussians.
Var gaussian_kl(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p);

class HredModel {
 public:
  HredModel() = default;
  HredModel(HredConfig config, ParameterSet params);
  static HredModel create(const HredConfig& config, std::uint64_t seed);

  const HredConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  EncoderParams encoder() const;
  ContextParams context() const;
  DecoderParams decoder() const;
  VhredParams vhred() const;

  // Throws SchemaError/ShapeError when params do not match the config.
  void validate() const;

 private:
  HredConfig config_;
  ParameterSet params_;
};

// Summed token NLL of every turn t >= 2 given turns < t. HRED only.
Var hred_nll(Tape& tape, const HredModel& model, const EncodedConversation& conversation);

enum class LatentMode {
  sample,     // z ~ posterior (training)
  prior_mean  // z = prior mean (evaluation)
};

struct VhredLoss {
  Var total;
  Var reconstruction;
  Var kl;
};

// Reconstruction NLL with z drawn from the posterior plus kl_weight * KL.
VhredLoss vhred_train_loss(Tape& tape, const HredModel& model,
                           const EncodedConversation& conversation, double kl_weight, Rng& rng);

struct NllResult {
  double nll = 0.0;
  std::size_t tokens = 0;
};

// Gradient-free evaluation; VHRED models decode from the prior mean.
NllResult evaluate_nll(const HredModel& model, const EncodedConversation& conversation);
double perplexity(const HredModel& model, std::span<const EncodedConversation> corpus);

// Number of predicted tokens (utterance tokens + EOS) over turns t >= 2.
std::size_t predicted_tokens(const EncodedConversation& conversation);

TokenIds with_bos_eos(std::span<const std::size_t> tokens);

struct PretrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  // KL weight rises linearly to 1 over this many optimizer steps.
  std::size_t kl_anneal_steps = 5000;
};

struct PretrainEpoch {
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;  // mean per-token NLL over the epoch
  double val_perplexity = 0.0;
};

struct PretrainResult {
  ParameterSet best;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_perplexity = 0.0;
  std::vector<PretrainEpoch> trace;
};

// Shuffled mini-batches of whole conversations; per-batch loss is the mean of
// per-conversation losses. Returns the snapshot with the lowest validation
// perplexity. The model's own parameters end at the last epoch.
PretrainResult pretrain(HredModel& model, std::span<const EncodedConversation> train,
                        std::span<const EncodedConversation> val, const PretrainConfig& config);

}  // namespace tlerc
