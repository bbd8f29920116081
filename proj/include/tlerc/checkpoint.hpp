#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlerc/corpus.hpp"
#include "tlerc/erc.hpp"
#include "tlerc/hred.hpp"
#include "tlerc/params.hpp"

namespace tlerc {

// On disk: "TLERC1", a little-endian uint64 header length, a JSON header
// {version, kind, config, tensors: [{name, shape, offset}]}, then float32
// little-endian payloads in header order. Values widen to double on load.
struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::string kind;  // "hred", "vhred", "erc", "context"
  nlohmann::json config = nlohmann::json::object();
  ParameterSet params;

  std::string to_bytes() const;
  static Checkpoint from_bytes(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Rounds every value to float32 precision, the granularity checkpoints keep.
ParameterSet round_to_float(const ParameterSet& params);

nlohmann::json to_json(const HredConfig& config);
HredConfig hred_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ErcConfig& config);
ErcConfig erc_config_from_json(const nlohmann::json& j);

// Source model checkpoint; the vocabulary travels in the config.
Checkpoint make_checkpoint(const HredModel& model, const Vocabulary& vocab);
HredModel hred_from_checkpoint(const Checkpoint& ckpt);
Vocabulary vocab_from_checkpoint(const Checkpoint& ckpt);

Checkpoint make_checkpoint(const ErcModel& model, const Vocabulary* vocab);
ErcModel erc_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tlerc
