#include "lpsr/trace_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lpsr {

using nlohmann::json;

json trace_to_json(const GenerationTrace& t) {
    json j;
    j["schema_version"] = kTraceSchemaVersion;
    j["problem_id"] = t.problem_id;
    j["tag"] = t.tag;
    j["prompt"] = t.prompt;
    j["tokens"] = t.tokens;
    j["final_length"] = t.final_length;
    j["token_cost"] = t.token_cost;
    j["truncated"] = t.truncated;
    j["answer"] = t.answer;
    j["outcome"] = t.outcome ? json(*t.outcome) : json(nullptr);

    json steps = json::array();
    for (const GateDecision& d : t.steps) {
        steps.push_back({{"step", d.step},
                         {"cos", d.cos},
                         {"entropy", d.entropy},
                         {"auth", d.authenticated}});
    }
    j["steps"] = std::move(steps);

    json rollbacks = json::array();
    for (const RollbackEvent& e : t.rollbacks) {
        rollbacks.push_back({{"step", e.step},
                             {"cos", e.cos},
                             {"entropy", e.entropy},
                             {"delta_index", e.delta_index},
                             {"alpha", e.alpha},
                             {"position_fraction", e.position_fraction},
                             {"magnitude_ratio", e.magnitude_ratio}});
    }
    j["rollbacks"] = std::move(rollbacks);

    if (!t.layer_min_cosine.empty()) j["layer_min_cosine"] = t.layer_min_cosine;
    if (t.vote) j["vote"] = {{"answers", t.vote->answers}, {"winner", t.vote->winner}};
    return j;
}

GenerationTrace trace_from_json(const json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kTraceSchemaVersion)
        throw std::runtime_error("trace schema_version mismatch: got " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kTraceSchemaVersion));
    GenerationTrace t;
    t.problem_id = j.at("problem_id").get<int>();
    t.tag = j.at("tag").get<std::string>();
    t.prompt = j.at("prompt").get<std::vector<int>>();
    t.tokens = j.at("tokens").get<std::vector<int>>();
    t.final_length = j.at("final_length").get<int>();
    t.token_cost = j.at("token_cost").get<std::int64_t>();
    t.truncated = j.at("truncated").get<bool>();
    t.answer = j.at("answer").get<int>();
    if (!j.at("outcome").is_null()) t.outcome = j.at("outcome").get<bool>();

    for (const json& s : j.at("steps")) {
        GateDecision d;
        d.step = s.at("step").get<int>();
        d.cos = s.at("cos").get<double>();
        d.entropy = s.at("entropy").get<double>();
        d.authenticated = s.at("auth").get<bool>();
        t.steps.push_back(d);
    }
    for (const json& r : j.at("rollbacks")) {
        RollbackEvent e;
        e.step = r.at("step").get<int>();
        e.cos = r.at("cos").get<double>();
        e.entropy = r.at("entropy").get<double>();
        e.delta_index = r.at("delta_index").get<int>();
        e.alpha = r.at("alpha").get<double>();
        e.position_fraction = r.at("position_fraction").get<double>();
        e.magnitude_ratio = r.at("magnitude_ratio").get<double>();
        t.rollbacks.push_back(e);
    }
    if (j.contains("layer_min_cosine"))
        t.layer_min_cosine = j.at("layer_min_cosine").get<std::vector<double>>();
    if (j.contains("vote")) {
        VoteRecord v;
        v.answers = j.at("vote").at("answers").get<std::vector<int>>();
        v.winner = j.at("vote").at("winner").get<int>();
        t.vote = std::move(v);
    }
    return t;
}

void write_traces_jsonl(const std::string& path, std::span<const GenerationTrace> traces) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_traces_jsonl: cannot open " + path);
    for (const GenerationTrace& t : traces) f << trace_to_json(t).dump() << '\n';
    if (!f) throw std::runtime_error("write_traces_jsonl: write failed for " + path);
}

std::vector<GenerationTrace> read_traces_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_traces_jsonl: cannot open " + path);
    std::vector<GenerationTrace> traces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            traces.push_back(trace_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return traces;
}

SummaryRow summarize_traces(std::span<const GenerationTrace> traces, const std::string& mode) {
    SummaryRow row;
    row.mode = mode;
    row.problems = static_cast<int>(traces.size());
    if (traces.empty()) return row;

    long with_outcome = 0, correct = 0, with_rollback = 0, rollbacks = 0;
    double cost = 0.0;
    for (const GenerationTrace& t : traces) {
        cost += static_cast<double>(t.token_cost);
        rollbacks += static_cast<long>(t.rollbacks.size());
        with_rollback += !t.rollbacks.empty();
        if (t.outcome) {
            ++with_outcome;
            correct += *t.outcome;
        }
    }
    if (with_outcome > 0)
        row.accuracy = static_cast<double>(correct) / static_cast<double>(with_outcome);
    row.mean_token_cost = cost / static_cast<double>(traces.size());
    row.rollback_rate = static_cast<double>(with_rollback) / static_cast<double>(traces.size());
    row.mean_rollbacks = static_cast<double>(rollbacks) / static_cast<double>(traces.size());
    return row;
}

std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string csv_double(const std::optional<double>& v) {
    return v ? csv_double(*v) : std::string();
}

void write_summary_csv(const std::string& path, std::span<const SummaryRow> rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_summary_csv: cannot open " + path);
    f << "mode,problems,accuracy,mean_token_cost,rollback_rate,mean_rollbacks_per_problem\n";
    for (const SummaryRow& r : rows) {
        f << r.mode << ',' << r.problems << ',' << csv_double(r.accuracy) << ','
          << csv_double(r.mean_token_cost) << ',' << csv_double(r.rollback_rate) << ','
          << csv_double(r.mean_rollbacks) << '\n';
    }
    if (!f) throw std::runtime_error("write_summary_csv: write failed for " + path);
}

}  // namespace lpsr
