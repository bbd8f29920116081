#include "tlerc/hred.hpp"

#include <cmath>
#include <iostream>
#include <numeric>

namespace tlerc {

void VhredParams::init_prior(ParameterSet& params, Rng& rng) const {
  params.add(prior_mu_W(), xavier_uniform(latent_dim, context_dim, rng));
  params.add(prior_mu_b(), Tensor::zeros({latent_dim}));
  params.add(prior_sigma_W(), xavier_uniform(latent_dim, context_dim, rng));
  params.add(prior_sigma_b(), Tensor::zeros({latent_dim}));
}

void VhredParams::init_posterior(ParameterSet& params, Rng& rng) const {
  const std::size_t in = context_dim + sentence_dim;
  params.add("vhred/post_W_mu", xavier_uniform(latent_dim, in, rng));
  params.add("vhred/post_b_mu", Tensor::zeros({latent_dim}));
  params.add("vhred/post_W_sigma", xavier_uniform(latent_dim, in, rng));
  params.add("vhred/post_b_sigma", Tensor::zeros({latent_dim}));
}

PriorVars bind_prior(Tape& tape, const ParameterSet& params) {
  return PriorVars{tape.param(params, VhredParams::prior_mu_W()),
                   tape.param(params, VhredParams::prior_mu_b()),
                   tape.param(params, VhredParams::prior_sigma_W()),
                   tape.param(params, VhredParams::prior_sigma_b())};
}

PosteriorVars bind_posterior(Tape& tape, const ParameterSet& params) {
  return PosteriorVars{tape.param(params, "vhred/post_W_mu"), tape.param(params, "vhred/post_b_mu"),
                       tape.param(params, "vhred/post_W_sigma"),
                       tape.param(params, "vhred/post_b_sigma")};
}

namespace {

Var floored_softplus(Var x) { return ops::add_scalar(ops::softplus(x), kSigmaFloor); }

LatentSample reparameterize(Var h_cxt, Var mu, Var sigma, std::span<const double> eps) {
  if (eps.size() != mu.size())
    throw ShapeError("vhred_context: eps has " + std::to_string(eps.size()) +
                     " values, latent_dim is " + std::to_string(mu.size()));
  Tape& tape = mu.tape();
  Var noise = tape.constant(Tensor::vector({eps.begin(), eps.end()}));
  Var z = mu + sigma * noise;
  return LatentSample{mu, sigma, z, ops::concat(h_cxt, z)};
}

std::vector<double> draw_normal(Rng& rng, std::size_t n) {
  std::vector<double> eps(n);
  for (auto& e : eps) e = rng.normal();
  return eps;
}

}  // namespace

LatentSample vhred_context(Var h_cxt, const PriorVars& prior, std::span<const double> eps) {
  Var mu = ops::linear(h_cxt, prior.W_mu, prior.b_mu);
  Var sigma = floored_softplus(ops::linear(h_cxt, prior.W_sigma, prior.b_sigma));
  return reparameterize(h_cxt, mu, sigma, eps);
}

LatentSample vhred_context(Var h_cxt, const PriorVars& prior, Rng& rng) {
  const auto eps = draw_normal(rng, prior.b_mu.size());
  return vhred_context(h_cxt, prior, eps);
}

Var gaussian_kl(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
  using namespace ops;
  // log(sigma_p / sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2
  Var diff = mu_q - mu_p;
  Var num = sigma_q * sigma_q + diff * diff;
  Var den = mul_scalar(sigma_p * sigma_p, 2.0);
  Var per_dim = add_scalar(ops::log(sigma_p) - ops::log(sigma_q) + div(num, den), -0.5);
  return sum(per_dim);
}

HredModel::HredModel(HredConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  validate();
}

HredModel HredModel::create(const HredConfig& config, std::uint64_t seed) {
  if (config.vocab_size <= kNumSpecial)
    throw ContractError("HredModel: vocabulary must contain tokens beyond the specials");
  HredModel model;
  model.config_ = config;
  Rng rng(seed);
  model.encoder().init(model.params_, rng);
  model.context().init(model.params_, rng);
  model.decoder().init(model.params_, rng);
  if (config.vhred()) {
    model.vhred().init_prior(model.params_, rng);
    model.vhred().init_posterior(model.params_, rng);
  }
  return model;
}

EncoderParams HredModel::encoder() const {
  return EncoderParams{"encoder", config_.vocab_size, config_.embed_dim, config_.encoder_hidden};
}

ContextParams HredModel::context() const {
  return ContextParams{GruParams{"context", config_.sentence_dim(), config_.context_hidden}};
}

DecoderParams HredModel::decoder() const {
  DecoderParams d;
  d.vocab_size = config_.vocab_size;
  d.embed_dim = config_.embed_dim;
  d.hidden_dim = config_.decoder_hidden;
  d.condition_dim = config_.context_hidden + config_.latent_dim;
  if (config_.share_embedding) d.shared_embedding = encoder().embedding();
  return d;
}

VhredParams HredModel::vhred() const {
  return VhredParams{config_.context_hidden, config_.sentence_dim(), config_.latent_dim};
}

void HredModel::validate() const {
  context().validate(params_);
  encoder().forward().validate(params_);
  encoder().backward().validate(params_);
  decoder().gru().validate(params_);
  for (const auto& name : {encoder().embedding(), decoder().embedding(),
                           std::string("decoder/bridge_W"), std::string("decoder/out_W")})
    if (!params_.contains(name)) throw SchemaError("missing parameter " + name);
  if (params_.at(encoder().embedding()).shape() != Shape{config_.vocab_size, config_.embed_dim})
    throw ShapeError("encoder embedding does not match vocab/embed sizes");
  if (params_.at("decoder/bridge_W").cols() != config_.context_hidden + config_.latent_dim)
    throw ShapeError("decoder bridge does not match context + latent size");
  if (config_.vhred())
    for (const auto& name : {VhredParams::prior_mu_W(), VhredParams::prior_sigma_W()})
      if (!params_.contains(name)) throw SchemaError("missing parameter " + name);
}

TokenIds with_bos_eos(std::span<const std::size_t> tokens) {
  TokenIds out;
  out.reserve(tokens.size() + 2);
  out.push_back(kBos);
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.push_back(kEos);
  return out;
}

std::size_t predicted_tokens(const EncodedConversation& conversation) {
  std::size_t n = 0;
  for (std::size_t t = 1; t < conversation.size(); ++t) n += conversation.utterances[t].size() + 1;
  return n;
}

Var hred_nll(Tape& tape, const HredModel& model, const EncodedConversation& conversation) {
  if (conversation.size() < 2)
    throw ContractError("hred_nll: conversation '" + conversation.id +
                        "' needs at least 2 utterances");
  const auto& cfg = model.config();
  EncoderVars enc = bind(tape, model.params(), model.encoder());
  ContextVars ctx = bind(tape, model.params(), model.context());
  DecoderVars dec = bind(tape, model.params(), model.decoder());
  PriorVars prior;
  if (cfg.vhred()) prior = bind_prior(tape, model.params());
  const std::vector<double> zero_eps(cfg.latent_dim, 0.0);

  Var h = tape.constant(Tensor::zeros({cfg.context_hidden}));
  std::vector<Var> terms;
  for (std::size_t t = 0; t + 1 < conversation.size(); ++t) {
    h = context_step(encode_sentence(conversation.utterances[t], enc), h, ctx);
    Var condition = cfg.vhred() ? vhred_context(h, prior, zero_eps).augmented : h;
    terms.push_back(sequence_nll(condition, with_bos_eos(conversation.utterances[t + 1]), dec));
  }
  return ops::sum_scalars(terms);
}

VhredLoss vhred_train_loss(Tape& tape, const HredModel& model,
                           const EncodedConversation& conversation, double kl_weight, Rng& rng) {
  const auto& cfg = model.config();
  if (!cfg.vhred()) throw ContractError("vhred_train_loss: model has no latent variable");
  if (!(kl_weight >= 0.0 && kl_weight <= 1.0))
    throw ContractError("vhred_train_loss: kl_weight must lie in [0, 1]");
  if (conversation.size() < 2)
    throw ContractError("vhred_train_loss: conversation '" + conversation.id +
                        "' needs at least 2 utterances");
  EncoderVars enc = bind(tape, model.params(), model.encoder());
  ContextVars ctx = bind(tape, model.params(), model.context());
  DecoderVars dec = bind(tape, model.params(), model.decoder());
  PriorVars prior = bind_prior(tape, model.params());
  PosteriorVars post = bind_posterior(tape, model.params());

  std::vector<Var> sentences;
  for (const auto& u : conversation.utterances) sentences.push_back(encode_sentence(u, enc));

  Var h = tape.constant(Tensor::zeros({cfg.context_hidden}));
  std::vector<Var> recon_terms, kl_terms;
  for (std::size_t t = 0; t + 1 < conversation.size(); ++t) {
    h = context_step(sentences[t], h, ctx);
    Var mu_p = ops::linear(h, prior.W_mu, prior.b_mu);
    Var sigma_p = floored_softplus(ops::linear(h, prior.W_sigma, prior.b_sigma));
    Var post_in = ops::concat(h, sentences[t + 1]);
    Var mu_q = ops::linear(post_in, post.W_mu, post.b_mu);
    Var sigma_q = floored_softplus(ops::linear(post_in, post.W_sigma, post.b_sigma));
    const auto eps = draw_normal(rng, cfg.latent_dim);
    LatentSample sample = reparameterize(h, mu_q, sigma_q, eps);
    recon_terms.push_back(
        sequence_nll(sample.augmented, with_bos_eos(conversation.utterances[t + 1]), dec));
    kl_terms.push_back(gaussian_kl(mu_q, sigma_q, mu_p, sigma_p));
  }
  Var recon = ops::sum_scalars(recon_terms);
  Var kl = ops::sum_scalars(kl_terms);
  return VhredLoss{recon + ops::mul_scalar(kl, kl_weight), recon, kl};
}

NllResult evaluate_nll(const HredModel& model, const EncodedConversation& conversation) {
  if (conversation.size() < 2) return {};
  Tape tape(false);
  return NllResult{hred_nll(tape, model, conversation).item(), predicted_tokens(conversation)};
}

double perplexity(const HredModel& model, std::span<const EncodedConversation> corpus) {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& conv : corpus) {
    auto r = evaluate_nll(model, conv);
    nll += r.nll;
    tokens += r.tokens;
  }
  if (tokens == 0) throw ContractError("perplexity: corpus has no predicted tokens");
  return std::exp(nll / static_cast<double>(tokens));
}

PretrainResult pretrain(HredModel& model, std::span<const EncodedConversation> train,
                        std::span<const EncodedConversation> val, const PretrainConfig& config) {
  if (config.batch_size == 0) throw ContractError("pretrain: batch_size must be >= 1");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].size() >= 2) usable.push_back(i);
  if (usable.size() < train.size())
    std::cerr << "warning: skipping " << (train.size() - usable.size())
              << " single-utterance conversation(s)\n";
  if (usable.empty()) throw ContractError("pretrain: no conversation with 2+ utterances");

  Rng rng(config.seed);
  Optimizer optimizer(config.optimizer, config.lr);
  PretrainResult result;
  result.best = model.params();
  const bool vhred = model.config().vhred();
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(usable);
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < usable.size(); start += config.batch_size) {
      const std::size_t end = std::min(usable.size(), start + config.batch_size);
      try {
        Tape tape;
        std::vector<Var> losses;
        for (std::size_t k = start; k < end; ++k) {
          const auto& conv = train[usable[k]];
          if (vhred) {
            const double w =
                config.kl_anneal_steps == 0
                    ? 1.0
                    : std::min(1.0, static_cast<double>(step) /
                                        static_cast<double>(config.kl_anneal_steps));
            auto loss = vhred_train_loss(tape, model, conv, w, rng);
            epoch_nll += loss.reconstruction.item();
            losses.push_back(loss.total);
          } else {
            Var loss = hred_nll(tape, model, conv);
            epoch_nll += loss.item();
            losses.push_back(loss);
          }
          epoch_tokens += predicted_tokens(conv);
        }
        Var batch_loss =
            ops::mul_scalar(ops::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
        optimizer.step(model.params(), tape.backward(batch_loss));
      } catch (const NumericError& e) {
        throw NumericError("pretrain diverged at step " + std::to_string(step + 1) + ": " +
                           e.what());
      }
      ++step;
    }
    PretrainEpoch record;
    record.epoch = epoch;
    record.train_nll = epoch_nll / static_cast<double>(epoch_tokens);
    record.val_perplexity = perplexity(model, val);
    if (!std::isfinite(record.val_perplexity))
      throw NumericError("pretrain diverged: non-finite validation perplexity at epoch " +
                         std::to_string(epoch));
    result.trace.push_back(record);
    if (result.best_epoch == 0 || record.val_perplexity < result.best_val_perplexity) {
      result.best_epoch = epoch;
      result.best_val_perplexity = record.val_perplexity;
      result.best = model.params();
    }
  }
  return result;
}

}  // namespace tlerc
