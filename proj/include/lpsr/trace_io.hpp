#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpsr/engine.hpp"

namespace lpsr {

inline constexpr int kTraceSchemaVersion = 1;

nlohmann::json trace_to_json(const GenerationTrace& trace);

/// Rejects records whose schema_version does not match.
GenerationTrace trace_from_json(const nlohmann::json& j);

/// One JSON object per line, in order.
void write_traces_jsonl(const std::string& path, std::span<const GenerationTrace> traces);
std::vector<GenerationTrace> read_traces_jsonl(const std::string& path);

struct SummaryRow {
    std::string mode;
    int problems = 0;
    std::optional<double> accuracy;  // over traces carrying outcomes
    double mean_token_cost = 0.0;
    double rollback_rate = 0.0;  // fraction of traces with at least one event
    double mean_rollbacks = 0.0;
};

SummaryRow summarize_traces(std::span<const GenerationTrace> traces, const std::string& mode);

// Fixed header: mode,problems,accuracy,mean_token_cost,rollback_rate,mean_rollbacks_per_problem
void write_summary_csv(const std::string& path, std::span<const SummaryRow> rows);

/// "%.6g" rendering shared by every CSV writer; empty string for absent
/// optionals.
std::string csv_double(double v);
std::string csv_double(const std::optional<double>& v);

}  // namespace lpsr
