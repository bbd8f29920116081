#include "tlerc/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace tlerc {

GridSpec GridSpec::defaults() {
  return GridSpec{{1e-3, 1e-4, 1e-5},
                  {OptimizerKind::adam, OptimizerKind::rmsprop},
                  {2, 10, 40},
                  {0.0, 0.5}};
}

std::vector<GridCell> GridSpec::cells() const {
  std::vector<GridCell> out;
  for (auto opt : optimizers)
    for (double lr : lrs)
      for (auto batch : batch_sizes)
        for (double d : dropouts) out.push_back(GridCell{opt, lr, batch, d});
  return out;
}

GridResult grid_search(const GridSpec& grid,
                       const std::function<double(const GridCell&)>& train_fn) {
  const auto cells = grid.cells();
  if (cells.empty()) throw ContractError("grid_search: empty grid");
  GridResult result;
  const GridEntry* best = nullptr;
  for (const auto& cell : cells) {
    GridEntry entry{cell, std::nullopt, {}};
    try {
      const double m = train_fn(cell);
      if (!std::isfinite(m)) throw NumericError("non-finite validation metric");
      entry.metric = m;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    result.leaderboard.push_back(std::move(entry));
  }
  for (const auto& entry : result.leaderboard) {
    if (!entry.metric) continue;
    if (best == nullptr || *entry.metric > *best->metric ||
        (*entry.metric == *best->metric && entry.cell.is_default() && !best->cell.is_default()))
      best = &entry;
  }
  if (best == nullptr) {
    std::string diag = "grid_search: every cell failed";
    for (const auto& e : result.leaderboard)
      diag += "\n  " + to_string(e.cell.optimizer) + " lr=" + std::to_string(e.cell.lr) +
              " batch=" + std::to_string(e.cell.batch_size) +
              " dropout=" + std::to_string(e.cell.dropout) + ": " + e.error;
    throw Error(diag);
  }
  result.best = best->cell;
  result.best_metric = *best->metric;
  return result;
}

const RunRecord* ExperimentReport::find(const std::string& arm, double fraction,
                                        std::uint64_t seed) const {
  for (const auto& r : runs)
    if (r.arm == arm && r.fraction == fraction && r.seed == seed) return &r;
  return nullptr;
}

const ArmAggregate* ExperimentReport::aggregate(const std::string& arm, double fraction) const {
  for (const auto& a : aggregates)
    if (a.arm == arm && a.fraction == fraction) return &a;
  return nullptr;
}

namespace {

nlohmann::json spec_json(const ExperimentSpec& spec) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : spec.arms)
    arms.push_back({{"name", a.name},
                    {"variant", to_string(a.variant)},
                    {"adaptation", to_string(a.adaptation)}});
  const auto& t = spec.training;
  return {{"arms", arms},
          {"fractions", spec.fractions},
          {"seeds", spec.seeds},
          {"model", to_json(spec.model)},
          {"training",
           {{"optimizer", to_string(t.optimizer)},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"max_epochs", t.max_epochs},
            {"patience", t.patience},
            {"exclude_labels", t.exclude_labels},
            {"fscore", t.fscore_mode == FScoreMode::weighted ? "weighted" : "micro"}}},
          {"max_tokens", spec.encode.max_tokens},
          {"max_turns", spec.encode.max_turns}};
}

RunRecord run_job(const ExperimentSpec& spec, const TargetData& data, const Arm& arm,
                  double fraction, std::uint64_t seed,
                  const std::vector<EncodedConversation>& val,
                  const std::vector<EncodedConversation>& test) {
  RunRecord record;
  record.arm = arm.name;
  record.fraction = fraction;
  record.seed = seed;
  try {
    const Corpus subset = subsample_training(data.train, fraction, seed);
    record.train_conversations = subset.conversations.size();
    const auto* dims = data.dims.empty() ? nullptr : &data.dims;
    const auto train = encode_all(subset, data.vocab, &data.labels, dims, spec.encode);

    TransferSpec ts{arm.variant, spec.source, arm.adaptation};
    ErcModel model = init_target(spec.model, ts, seed, spec.vectors);
    ErcTrainConfig tc = spec.training;
    tc.seed = seed;
    tc.frozen = apply_adaptation(model, arm.adaptation);
    record.result = train_erc(model, train, val, test, tc);
    if (!spec.keep_params) record.result.best_params = ParameterSet{};
    if (!spec.keep_traces) {
      record.result.train_loss.clear();
      record.result.val_loss.clear();
    }
    record.ok = true;
  } catch (const std::exception& e) {
    record.ok = false;
    record.error = e.what();
  }
  return record;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, const TargetData& data) {
  if (spec.arms.empty()) throw ContractError("run_experiment: no arms");
  if (spec.seeds.empty()) throw ContractError("run_experiment: no seeds");
  for (double f : spec.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ContractError("run_experiment: fraction outside (0, 1]");

  const auto* dims = data.dims.empty() ? nullptr : &data.dims;
  const auto val = encode_all(data.val, data.vocab, &data.labels, dims, spec.encode);
  const auto test = encode_all(data.test, data.vocab, &data.labels, dims, spec.encode);

  struct Job {
    double fraction;
    const Arm* arm;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double f : spec.fractions)
    for (const auto& arm : spec.arms)
      for (auto seed : spec.seeds) jobs.push_back({f, &arm, seed});

  ExperimentReport report;
  report.config = spec_json(spec);
  report.runs.resize(jobs.size());
  const auto n = static_cast<long>(jobs.size());
  if (spec.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i)
      report.runs[i] = run_job(spec, data, *jobs[i].arm, jobs[i].fraction, jobs[i].seed, val, test);
  } else {
    for (long i = 0; i < n; ++i)
      report.runs[i] = run_job(spec, data, *jobs[i].arm, jobs[i].fraction, jobs[i].seed, val, test);
  }

  const Arm* baseline = nullptr;
  for (const auto& arm : spec.arms)
    if (arm.variant == TransferVariant::random) {
      baseline = &arm;
      break;
    }

  for (double f : spec.fractions) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& arm : spec.arms) {
      ArmAggregate agg;
      agg.arm = arm.name;
      agg.fraction = f;
      std::vector<double> metric, be;
      std::vector<std::uint64_t> seeds;
      for (const auto& r : report.runs) {
        if (r.arm != arm.name || r.fraction != f) continue;
        if (!r.ok) {
          agg.complete = false;
          continue;
        }
        metric.push_back(r.result.test_metric);
        be.push_back(static_cast<double>(r.result.best_epoch));
        seeds.push_back(r.seed);
      }
      if (!metric.empty()) agg.aggregate = aggregate_runs(metric, be, seeds);
      values[arm.name] = metric;
      report.aggregates.push_back(std::move(agg));
    }
    if (baseline == nullptr || spec.seeds.size() < 2) continue;
    const auto& base = values[baseline->name];
    for (const auto& arm : spec.arms) {
      if (&arm == baseline) continue;
      const auto& v = values[arm.name];
      if (v.empty() || base.empty()) continue;
      report.significance.push_back({arm.name, baseline->name, f, wilcoxon_ranksum(v, base)});
    }
  }
  return report;
}

Checkpoint in_domain_finetune(const Checkpoint& source, const Corpus& target_train,
                              const Corpus& target_val, const PretrainConfig& config) {
  if (config.epochs == 0) return source;
  HredModel model = hred_from_checkpoint(source);
  const Vocabulary vocab = vocab_from_checkpoint(source);
  const EncodeOptions opts{model.config().max_tokens, model.config().max_turns};
  const auto train = encode_all(target_train, vocab, nullptr, nullptr, opts);
  const auto val = encode_all(target_val, vocab, nullptr, nullptr, opts);
  auto result = pretrain(model, train, val, config);
  model.params() = result.best;
  Checkpoint out = make_checkpoint(model, vocab);
  out.config["finetune_best_epoch"] = result.best_epoch;
  return out;
}

}  // namespace tlerc
