#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tlerc/checkpoint.hpp"
#include "tlerc/erc.hpp"
#include "tlerc/params.hpp"

namespace tlerc {

// Recurrent matrices, biases and the dense projection of the context
// encoder. Input matrices V_* are left out so the target's sentence encoder
// may have any output size.
std::vector<std::string> context_transfer_names(bool with_prior);

// Named subset {W_z, W_r, W_h, b_z, b_r, b_h, W_p, b_p} (plus the four
// latent-prior tensors for VHRED sources).
ParameterSet export_context_params(const Checkpoint& source);

// Checkpoint of kind "context" holding just the transfer set.
Checkpoint context_checkpoint(const Checkpoint& source);

enum class TransferVariant { random, encoder_only, encoder_plus_context };
enum class Adaptation { finetune_all, freeze_encoder, freeze_encoder_and_context };

std::string to_string(TransferVariant v);
std::string to_string(Adaptation a);
TransferVariant parse_variant(const std::string& s);  // random|encoder|encoder+context
Adaptation parse_adaptation(const std::string& s);    // finetune|freeze-enc|freeze-enc-ctx

struct TransferSpec {
  TransferVariant variant = TransferVariant::random;
  const Checkpoint* source = nullptr;  // required unless variant == random
  Adaptation adaptation = Adaptation::finetune_all;
};

// Builds the target model under `config` with weights drawn from `seed`,
// then copies in the encoder (trainable plugin only) and/or the context
// transfer set. Hidden-size mismatches are ShapeErrors.
ErcModel init_target(const ErcConfig& config, const TransferSpec& spec, std::uint64_t seed,
                     std::shared_ptr<const ExternalVectors> vectors = nullptr);

// Parameters excluded from updates under a strategy.
FreezeMask apply_adaptation(const ErcModel& model, Adaptation strategy);

// Throws ContractError when no parameter is left trainable.
void validate_mask(const ParameterSet& params, const FreezeMask& mask);

}  // namespace tlerc
