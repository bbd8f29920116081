#include "tlerc/transfer.hpp"

namespace tlerc {

std::vector<std::string> context_transfer_names(bool with_prior) {
  std::vector<std::string> names;
  for (const char* local : {"W_z", "W_r", "W_h", "b_z", "b_r", "b_h", "W_p", "b_p"})
    names.push_back(std::string("context/") + local);
  if (with_prior)
    for (const auto& n : {VhredParams::prior_mu_W(), VhredParams::prior_mu_b(),
                          VhredParams::prior_sigma_W(), VhredParams::prior_sigma_b()})
      names.push_back(n);
  return names;
}

ParameterSet export_context_params(const Checkpoint& source) {
  if (source.kind != "hred" && source.kind != "vhred" && source.kind != "context")
    throw SchemaError("export_context_params: checkpoint kind '" + source.kind +
                      "' is not a generative source");
  bool prior = source.kind == "vhred";
  if (source.kind == "context") prior = source.params.contains(VhredParams::prior_mu_W());
  std::vector<std::string> missing;
  ParameterSet out;
  for (const auto& name : context_transfer_names(prior)) {
    if (!source.params.contains(name))
      missing.push_back(name);
    else
      out.add(name, source.params.at(name));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw SchemaError("export_context_params: missing " + list);
  }
  return out;
}

Checkpoint context_checkpoint(const Checkpoint& source) {
  Checkpoint out;
  out.kind = "context";
  out.config = {{"source_kind", source.kind}};
  if (source.config.contains("context_hidden"))
    out.config["context_hidden"] = source.config.at("context_hidden");
  if (source.config.contains("latent_dim"))
    out.config["latent_dim"] = source.config.at("latent_dim");
  out.params = export_context_params(source);
  return out;
}

std::string to_string(TransferVariant v) {
  switch (v) {
    case TransferVariant::random: return "random";
    case TransferVariant::encoder_only: return "encoder";
    case TransferVariant::encoder_plus_context: return "encoder+context";
  }
  return "?";
}

std::string to_string(Adaptation a) {
  switch (a) {
    case Adaptation::finetune_all: return "finetune";
    case Adaptation::freeze_encoder: return "freeze-enc";
    case Adaptation::freeze_encoder_and_context: return "freeze-enc-ctx";
  }
  return "?";
}

TransferVariant parse_variant(const std::string& s) {
  if (s == "random") return TransferVariant::random;
  if (s == "encoder") return TransferVariant::encoder_only;
  if (s == "encoder+context") return TransferVariant::encoder_plus_context;
  throw FormatError("unknown variant '" + s + "' (random|encoder|encoder+context)");
}

Adaptation parse_adaptation(const std::string& s) {
  if (s == "finetune") return Adaptation::finetune_all;
  if (s == "freeze-enc") return Adaptation::freeze_encoder;
  if (s == "freeze-enc-ctx") return Adaptation::freeze_encoder_and_context;
  throw FormatError("unknown adaptation '" + s + "' (finetune|freeze-enc|freeze-enc-ctx)");
}

namespace {

void copy_checked(ParameterSet& target, const ParameterSet& source, const std::string& name) {
  const Tensor& src = source.at(name);
  if (!target.contains(name)) throw SchemaError("target model has no parameter " + name);
  if (target.at(name).shape() != src.shape())
    throw ShapeError("cannot transfer " + name + ": source " + shape_str(src.shape()) +
                     " vs target " + shape_str(target.at(name).shape()));
  target.set(name, src);
}

}  // namespace

ErcModel init_target(const ErcConfig& config, const TransferSpec& spec, std::uint64_t seed,
                     std::shared_ptr<const ExternalVectors> vectors) {
  ErcModel model = ErcModel::create(config, seed, std::move(vectors));
  if (spec.variant == TransferVariant::random) return model;
  if (spec.source == nullptr)
    throw ContractError("init_target: variant " + to_string(spec.variant) +
                        " needs a source checkpoint");
  const Checkpoint& src = *spec.source;

  if (config.encoder_kind == SentenceEncoderKind::trainable) {
    if (src.kind != "hred" && src.kind != "vhred")
      throw SchemaError("init_target: encoder transfer needs a full source checkpoint");
    for (const auto& name : src.params.names_with_prefix("encoder/"))
      copy_checked(model.params(), src.params, name);
  }
  if (spec.variant == TransferVariant::encoder_plus_context) {
    const ParameterSet subset = export_context_params(src);
    const bool prior = subset.contains(VhredParams::prior_mu_W());
    if (prior && config.latent_dim == 0)
      throw ShapeError("init_target: VHRED source needs a target with latent_dim > 0");
    for (const auto& [name, t] : subset) copy_checked(model.params(), subset, name);
  }
  model.validate();
  return model;
}

FreezeMask apply_adaptation(const ErcModel& model, Adaptation strategy) {
  FreezeMask mask;
  if (strategy == Adaptation::finetune_all) return mask;
  for (const auto& name : model.params().names_with_prefix("encoder/")) mask.insert(name);
  if (strategy == Adaptation::freeze_encoder_and_context) {
    const bool prior = model.config().latent_dim > 0;
    for (const auto& name : context_transfer_names(prior)) mask.insert(name);
  }
  validate_mask(model.params(), mask);
  return mask;
}

void validate_mask(const ParameterSet& params, const FreezeMask& mask) {
  for (const auto& [name, t] : params)
    if (!mask.contains(name)) return;
  throw ContractError("adaptation leaves no trainable parameter");
}

}  // namespace tlerc
