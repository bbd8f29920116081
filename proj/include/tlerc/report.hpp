#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlerc/harness.hpp"
#include "tlerc/hred.hpp"
#include "tlerc/metrics.hpp"

namespace tlerc {

// Reports are line-delimited JSON, one record per line, each carrying a
// "type" field. No timestamps, so identical inputs give identical bytes.

nlohmann::json to_json(const EvalResult& eval);
nlohmann::json to_json(const RunAggregate& agg);

std::vector<nlohmann::json> pretrain_records(const PretrainResult& result,
                                             const nlohmann::json& config);
std::vector<nlohmann::json> experiment_records(const ExperimentReport& report);
std::vector<nlohmann::json> grid_records(const GridResult& result);

void write_jsonl(std::ostream& out, const std::vector<nlohmann::json>& records);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace tlerc
