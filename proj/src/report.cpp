#include "tlerc/report.hpp"

#include <fstream>
#include <ostream>

namespace tlerc {

using nlohmann::json;

json to_json(const EvalResult& eval) {
  json classes = json::array();
  for (const auto& c : eval.per_class)
    classes.push_back({{"label", c.label},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1},
                       {"support", c.support}});
  return {{"metric", eval.metric},
          {"value", eval.value},
          {"per_class", classes},
          {"excluded", eval.excluded}};
}

json to_json(const RunAggregate& agg) {
  json j = {{"values", agg.values},
            {"best_epochs", agg.best_epochs},
            {"seeds", agg.seeds},
            {"mean", agg.mean},
            {"mean_best_epoch", agg.mean_best_epoch}};
  j["std_error"] = agg.std_error ? json(*agg.std_error) : json(nullptr);
  return j;
}

std::vector<json> pretrain_records(const PretrainResult& result, const json& config) {
  std::vector<json> out;
  out.push_back({{"type", "config"}, {"config", config}});
  for (const auto& e : result.trace)
    out.push_back({{"type", "epoch"},
                   {"epoch", e.epoch},
                   {"train_nll", e.train_nll},
                   {"val_perplexity", e.val_perplexity}});
  out.push_back({{"type", "summary"},
                 {"best_epoch", result.best_epoch},
                 {"best_val_perplexity", result.best_val_perplexity}});
  return out;
}

std::vector<json> experiment_records(const ExperimentReport& report) {
  std::vector<json> out;
  out.push_back({{"type", "config"}, {"config", report.config}});
  for (const auto& r : report.runs) {
    json run = {{"type", "run"},
                {"arm", r.arm},
                {"fraction", r.fraction},
                {"seed", r.seed},
                {"ok", r.ok}};
    if (!r.ok) {
      run["error"] = r.error;
      out.push_back(std::move(run));
      continue;
    }
    const auto& res = r.result;
    run["train_conversations"] = r.train_conversations;
    run["best_epoch"] = res.best_epoch;
    run["epochs_run"] = res.epochs_run;
    run["best_val_loss"] = res.best_val_loss;
    run["val_metric"] = res.val_metric;
    run["test_metric"] = res.test_metric;
    if (res.test_eval) run["test_eval"] = to_json(*res.test_eval);
    if (!res.test_pearson.empty()) run["test_pearson"] = res.test_pearson;
    out.push_back(std::move(run));
    for (std::size_t e = 0; e < res.val_loss.size(); ++e)
      out.push_back({{"type", "trace"},
                     {"arm", r.arm},
                     {"fraction", r.fraction},
                     {"seed", r.seed},
                     {"epoch", e + 1},
                     {"train_loss", res.train_loss[e]},
                     {"val_loss", res.val_loss[e]}});
  }
  for (const auto& a : report.aggregates) {
    json j = {{"type", "aggregate"},
              {"arm", a.arm},
              {"fraction", a.fraction},
              {"complete", a.complete}};
    j["aggregate"] = a.aggregate ? to_json(*a.aggregate) : json(nullptr);
    out.push_back(std::move(j));
  }
  for (const auto& s : report.significance)
    out.push_back({{"type", "significance"},
                   {"arm", s.arm},
                   {"baseline", s.baseline},
                   {"fraction", s.fraction},
                   {"u", s.test.u},
                   {"p", s.test.p},
                   {"exact", s.test.exact}});
  return out;
}

std::vector<json> grid_records(const GridResult& result) {
  auto cell_json = [](const GridCell& c) {
    return json{{"optimizer", to_string(c.optimizer)},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"dropout", c.dropout}};
  };
  std::vector<json> out;
  for (const auto& e : result.leaderboard) {
    json j = {{"type", "cell"}, {"cell", cell_json(e.cell)}};
    if (e.metric)
      j["val_metric"] = *e.metric;
    else
      j["error"] = e.error;
    out.push_back(std::move(j));
  }
  out.push_back({{"type", "best"}, {"cell", cell_json(result.best)}, {"val_metric", result.best_metric}});
  return out;
}

void write_jsonl(std::ostream& out, const std::vector<json>& records) {
  for (const auto& r : records) out << r.dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write report " + path.string());
  write_jsonl(out, records);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open report " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("report line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tlerc
