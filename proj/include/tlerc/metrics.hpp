#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tlerc {

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalResult {
  std::string metric;
  double value = 0.0;
  std::vector<ClassScore> per_class;
  std::vector<std::string> excluded;
};

enum class FScoreMode {
  // Support-weighted mean of per-class F1. Instances whose gold label is
  // excluded are dropped; predicting an excluded label on a retained
  // instance counts against the gold class.
  weighted,
  // Micro F1 pooled over the non-excluded classes, all instances kept.
  micro
};

EvalResult weighted_fscore(std::span<const std::string> gold, std::span<const std::string> pred,
                           const std::set<std::string>& exclude = {},
                           FScoreMode mode = FScoreMode::weighted);

// Two-pass product-moment correlation. Throws ContractError for n < 2 or a
// zero-variance series.
double pearson_r(std::span<const double> x, std::span<const double> y);

enum class RankSumMethod { automatic, exact, normal };

struct RankSumResult {
  double u = 0.0;  // Mann-Whitney U of the first sample
  double p = 1.0;
  bool exact = false;
};

// Two-tailed Wilcoxon rank-sum (Mann-Whitney U) test with mid-ranks. The
// automatic method enumerates the null distribution when n_a + n_b <= 12 and
// there are no ties, and otherwise uses the normal approximation with tie and
// continuity corrections.
RankSumResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b,
                               RankSumMethod method = RankSumMethod::automatic);

struct RunAggregate {
  std::vector<double> values;
  std::vector<double> best_epochs;
  std::vector<std::uint64_t> seeds;
  double mean = 0.0;
  std::optional<double> std_error;  // present for 2+ runs
  double mean_best_epoch = 0.0;
};

RunAggregate aggregate_runs(std::span<const double> values, std::span<const double> best_epochs,
                            std::span<const std::uint64_t> seeds = {});

}  // namespace tlerc
