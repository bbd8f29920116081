#include "tlerc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tlerc/tensor.hpp"

namespace tlerc {

EvalResult weighted_fscore(std::span<const std::string> gold, std::span<const std::string> pred,
                           const std::set<std::string>& exclude, FScoreMode mode) {
  if (gold.size() != pred.size())
    throw ContractError("weighted_fscore: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted labels");

  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  };
  std::map<std::string, Counts> counts;
  std::size_t retained = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool gold_excluded = exclude.contains(gold[i]);
    if (mode == FScoreMode::weighted && gold_excluded) continue;
    ++retained;
    if (!gold_excluded) {
      auto& g = counts[gold[i]];
      ++g.support;
      if (pred[i] == gold[i])
        ++g.tp;
      else
        ++g.fn;
    }
    if (pred[i] != gold[i] && !exclude.contains(pred[i])) ++counts[pred[i]].fp;
  }
  if (retained == 0) throw ContractError("weighted_fscore: every instance is excluded");

  auto f1_of = [](std::size_t tp, std::size_t fp, std::size_t fn, double& p, double& r) {
    p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  };

  EvalResult result;
  result.excluded.assign(exclude.begin(), exclude.end());
  std::size_t total_support = 0;
  for (const auto& [label, c] : counts) total_support += c.support;

  double weighted = 0.0;
  Counts pooled;
  for (const auto& [label, c] : counts) {
    ClassScore s;
    s.label = label;
    s.support = c.support;
    s.f1 = f1_of(c.tp, c.fp, c.fn, s.precision, s.recall);
    if (total_support > 0)
      weighted += static_cast<double>(c.support) / static_cast<double>(total_support) * s.f1;
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    result.per_class.push_back(std::move(s));
  }
  if (mode == FScoreMode::weighted) {
    result.metric = "weighted_f1";
    result.value = weighted;
  } else {
    double p, r;
    result.metric = "micro_f1";
    result.value = f1_of(pooled.tp, pooled.fp, pooled.fn, p, r);
  }
  return result;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("pearson_r: series lengths differ");
  if (x.size() < 2) throw ContractError("pearson_r: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ContractError("pearson_r: undefined correlation (zero variance)");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// counts[u] = number of rank assignments giving U = u for sample sizes m, n.
std::vector<double> u_distribution(std::size_t m, std::size_t n) {
  // f[i][j][u] via rolling tables over j.
  const std::size_t max_u = m * n;
  std::vector<std::vector<std::vector<double>>> f(
      m + 1, std::vector<std::vector<double>>(n + 1, std::vector<double>(max_u + 1, 0.0)));
  for (std::size_t i = 0; i <= m; ++i)
    for (std::size_t j = 0; j <= n; ++j) {
      if (i == 0 || j == 0) {
        f[i][j][0] = 1.0;
        continue;
      }
      for (std::size_t u = 0; u <= i * j; ++u) {
        // Largest observation belongs to the first sample (contributes j) or
        // to the second.
        double v = f[i][j - 1][u];
        if (u >= j) v += f[i - 1][j][u - j];
        f[i][j][u] = v;
      }
    }
  return f[m][n];
}

}  // namespace

RankSumResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b,
                               RankSumMethod method) {
  if (a.empty() || b.empty()) throw ContractError("wilcoxon_ranksum: empty sample");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;

  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[j + 1].first == pooled[i].first) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k <= j; ++k)
      if (pooled[k].second == 0) rank_sum_a += mid;
    i = j + 1;
  }

  RankSumResult result;
  const double dna = static_cast<double>(na), dnb = static_cast<double>(nb);
  result.u = rank_sum_a - dna * (dna + 1.0) / 2.0;

  bool use_exact = method == RankSumMethod::exact ||
                   (method == RankSumMethod::automatic && n <= 12 && !ties);
  if (use_exact && ties) throw ContractError("wilcoxon_ranksum: exact method requires no ties");

  if (use_exact) {
    const auto dist = u_distribution(na, nb);
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(result.u));
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      if (k <= u) lower += dist[k];
      if (k >= u) upper += dist[k];
    }
    result.p = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    result.exact = true;
    return result;
  }

  const double dn = static_cast<double>(n);
  const double mean = dna * dnb / 2.0;
  const double var = dna * dnb / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (var <= 0.0) {
    result.p = 1.0;
    return result;
  }
  const double z = std::max(0.0, std::abs(result.u - mean) - 0.5) / std::sqrt(var);
  result.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

RunAggregate aggregate_runs(std::span<const double> values, std::span<const double> best_epochs,
                            std::span<const std::uint64_t> seeds) {
  if (values.empty()) throw ContractError("aggregate_runs: no runs");
  RunAggregate agg;
  agg.values.assign(values.begin(), values.end());
  agg.best_epochs.assign(best_epochs.begin(), best_epochs.end());
  agg.seeds.assign(seeds.begin(), seeds.end());
  const double n = static_cast<double>(values.size());
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  if (!best_epochs.empty())
    agg.mean_best_epoch = std::accumulate(best_epochs.begin(), best_epochs.end(), 0.0) /
                          static_cast<double>(best_epochs.size());
  return agg;
}

}  // namespace tlerc
