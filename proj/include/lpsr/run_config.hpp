#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lpsr/engine.hpp"
#include "lpsr/model.hpp"
#include "lpsr/simulator.hpp"

namespace lpsr {

enum class BackendKind { Simulator, Transformer };

// Synthetic problem set for the transformer backend: seeded prompts plus a
// seeded reference sequence per problem (the calibration oracle).
struct ToyProblemConfig {
    int count = 100;
    std::uint64_t seed = 1;
    int prompt_len = 4;
    int gold_len = 24;

    bool operator==(const ToyProblemConfig&) const = default;
};

struct BasisConfig {
    std::string path = "basis.lpsb";
    int k = 256;
    int restarts = 20;
    double ortho_threshold = 0.95;

    bool operator==(const BasisConfig&) const = default;
};

/// Everything a command needs: backend choice and geometry, problem set,
/// engine parameters, basis build parameters, output location. All
/// randomness flows from the seeds recorded here.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int workers = 0;  // 0: take LPSR_WORKERS from the environment, else 1
    BackendKind backend = BackendKind::Simulator;
    ModelConfig model;
    SimSuiteConfig sim;
    ToyProblemConfig toy;
    EngineConfig engine;
    BasisConfig basis;

    bool operator==(const RunConfig&) const = default;
};

std::string to_string(DecodeMode mode);
DecodeMode decode_mode_from_string(const std::string& s);
std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& s);

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

/// Cross-field checks (layer bounds, basis k vs. modes, step budgets).
void validate_config(const RunConfig& cfg);

}  // namespace lpsr
