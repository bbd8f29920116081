#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tlerc/checkpoint.hpp"
#include "tlerc/corpus.hpp"
#include "tlerc/erc.hpp"
#include "tlerc/hred.hpp"
#include "tlerc/metrics.hpp"
#include "tlerc/transfer.hpp"

namespace tlerc {

struct GridCell {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-4;
  std::size_t batch_size = 10;
  double dropout = 0.0;

  bool is_default() const { return optimizer == OptimizerKind::adam && lr == 1e-4; }
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridSpec {
  std::vector<double> lrs;
  std::vector<OptimizerKind> optimizers;
  std::vector<std::size_t> batch_sizes;
  std::vector<double> dropouts;

  // lr {1e-3, 1e-4, 1e-5} x {Adam, RMSprop} x batch {2, 10, 40} x dropout {0, 0.5}
  static GridSpec defaults();
  std::vector<GridCell> cells() const;
};

struct GridEntry {
  GridCell cell;
  std::optional<double> metric;  // empty when the cell failed
  std::string error;
};

struct GridResult {
  GridCell best;
  double best_metric = 0.0;
  std::vector<GridEntry> leaderboard;  // grid order
};

// Evaluates every cell once. Highest metric wins; among tied cells the
// (Adam, 1e-4) default is preferred, then grid order.
GridResult grid_search(const GridSpec& grid, const std::function<double(const GridCell&)>& train_fn);

struct Arm {
  std::string name;
  TransferVariant variant = TransferVariant::random;
  Adaptation adaptation = Adaptation::finetune_all;
};

struct ExperimentSpec {
  std::vector<Arm> arms;
  std::vector<double> fractions{1.0};
  std::vector<std::uint64_t> seeds{1};
  ErcConfig model;          // labels/dims/vocab filled by the caller
  ErcTrainConfig training;  // seed and frozen mask are set per run
  EncodeOptions encode;
  const Checkpoint* source = nullptr;
  std::shared_ptr<const ExternalVectors> vectors;
  bool parallel = true;
  bool keep_traces = true;
  bool keep_params = false;  // retain each run's best snapshot
};

struct RunRecord {
  std::string arm;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t train_conversations = 0;
  RunResult result;  // best_params cleared unless spec.keep_params
};

struct ArmAggregate {
  std::string arm;
  double fraction = 1.0;
  bool complete = true;
  std::optional<RunAggregate> aggregate;
};

struct Significance {
  std::string arm;
  std::string baseline;
  double fraction = 1.0;
  RankSumResult test;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<RunRecord> runs;  // (fraction, arm, seed) order
  std::vector<ArmAggregate> aggregates;
  std::vector<Significance> significance;

  const RunRecord* find(const std::string& arm, double fraction, std::uint64_t seed) const;
  const ArmAggregate* aggregate(const std::string& arm, double fraction) const;
};

// Data for one target task. Vocabulary and labels must already be fixed.
struct TargetData {
  Corpus train, val, test;
  Vocabulary vocab;
  LabelSet labels;
  std::vector<std::string> dims;
};

// Each (fraction, arm, seed) job subsamples the training dialogues with its
// seed (so arms are paired), builds the target through init_target and
// trains it. Jobs run in parallel unless spec.parallel is false; the report
// is assembled serially afterwards. Arms are compared to the first arm with
// the random variant.
ExperimentReport run_experiment(const ExperimentSpec& spec, const TargetData& data);

// Continues generative training of a source model on target conversations
// (labels ignored) and returns the updated source checkpoint. Zero epochs
// returns the input unchanged.
Checkpoint in_domain_finetune(const Checkpoint& source, const Corpus& target_train,
                              const Corpus& target_val, const PretrainConfig& config);

}  // namespace tlerc
