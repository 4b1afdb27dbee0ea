#include "lpsr/run_config.hpp"

#include <fstream>
#include <stdexcept>

namespace lpsr {

using nlohmann::json;

std::string to_string(DecodeMode mode) {
    switch (mode) {
        case DecodeMode::Lpsr: return "lpsr";
        case DecodeMode::Greedy: return "greedy";
        case DecodeMode::StaticSteer: return "static_steer";
        case DecodeMode::BestOfN: return "best_of_n";
    }
    throw std::logic_error("unknown DecodeMode");
}

DecodeMode decode_mode_from_string(const std::string& s) {
    if (s == "lpsr") return DecodeMode::Lpsr;
    if (s == "greedy") return DecodeMode::Greedy;
    if (s == "static_steer") return DecodeMode::StaticSteer;
    if (s == "best_of_n") return DecodeMode::BestOfN;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(BackendKind kind) {
    return kind == BackendKind::Simulator ? "simulator" : "transformer";
}

BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "simulator") return BackendKind::Simulator;
    if (s == "transformer") return BackendKind::Transformer;
    throw std::invalid_argument("unknown backend: " + s);
}

namespace {

// Every field has a struct default, so partial configs stay valid.
template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json model_to_json(const ModelConfig& m) {
    return {{"layers", m.layers},   {"dim", m.dim},
            {"heads", m.heads},     {"vocab", m.vocab},
            {"seed", m.seed},       {"max_steps", m.max_steps},
            {"identity_final_norm", m.identity_final_norm}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    get(j, "layers", m.layers);
    get(j, "dim", m.dim);
    get(j, "heads", m.heads);
    get(j, "vocab", m.vocab);
    get(j, "seed", m.seed);
    get(j, "max_steps", m.max_steps);
    get(j, "identity_final_norm", m.identity_final_norm);
    return m;
}

json sim_to_json(const SimSuiteConfig& s) {
    return {{"count", s.count},
            {"seed", s.seed},
            {"layers", s.layers},
            {"dim", s.dim},
            {"vocab", s.vocab},
            {"signal_layer", s.signal_layer},
            {"modes", s.modes},
            {"onsets_max", s.onsets_max},
            {"error_rate", s.error_rate},
            {"uncorrectable_rate", s.uncorrectable_rate},
            {"miss_rate", s.miss_rate},
            {"benign_low_rate", s.benign_low_rate},
            {"benign_mild_rate", s.benign_mild_rate},
            {"steps_min", s.steps_min},
            {"steps_max", s.steps_max},
            {"drift_deg", s.drift_deg},
            {"onset_cosine", s.onset_cosine},
            {"miss_cosine", s.miss_cosine},
            {"benign_low_cosine", s.benign_low_cosine},
            {"benign_mild_cosine", s.benign_mild_cosine},
            {"nominal_entropy", s.nominal_entropy},
            {"benign_low_entropy", s.benign_low_entropy},
            {"onset_entropy_frac", s.onset_entropy_frac},
            {"noise", s.noise},
            {"align_threshold", s.align_threshold},
            {"delta_mag", s.delta_mag},
            {"onset_step_override", s.onset_step_override}};
}

SimSuiteConfig sim_from_json(const json& j) {
    SimSuiteConfig s;
    get(j, "count", s.count);
    get(j, "seed", s.seed);
    get(j, "layers", s.layers);
    get(j, "dim", s.dim);
    get(j, "vocab", s.vocab);
    get(j, "signal_layer", s.signal_layer);
    get(j, "modes", s.modes);
    get(j, "onsets_max", s.onsets_max);
    get(j, "error_rate", s.error_rate);
    get(j, "uncorrectable_rate", s.uncorrectable_rate);
    get(j, "miss_rate", s.miss_rate);
    get(j, "benign_low_rate", s.benign_low_rate);
    get(j, "benign_mild_rate", s.benign_mild_rate);
    get(j, "steps_min", s.steps_min);
    get(j, "steps_max", s.steps_max);
    get(j, "drift_deg", s.drift_deg);
    get(j, "onset_cosine", s.onset_cosine);
    get(j, "miss_cosine", s.miss_cosine);
    get(j, "benign_low_cosine", s.benign_low_cosine);
    get(j, "benign_mild_cosine", s.benign_mild_cosine);
    get(j, "nominal_entropy", s.nominal_entropy);
    get(j, "benign_low_entropy", s.benign_low_entropy);
    get(j, "onset_entropy_frac", s.onset_entropy_frac);
    get(j, "noise", s.noise);
    get(j, "align_threshold", s.align_threshold);
    get(j, "delta_mag", s.delta_mag);
    get(j, "onset_step_override", s.onset_step_override);
    return s;
}

json engine_to_json(const EngineConfig& e) {
    return {{"mode", to_string(e.mode)},
            {"l_crit", e.l_crit},
            {"tau_phi", e.gate.tau_phi},
            {"tau_h", e.gate.tau_h},
            {"alpha_max", e.alpha_max},
            {"max_steps", e.max_steps},
            {"rollback_depth", e.rollback_depth},
            {"rollback_budget", e.rollback_budget},
            {"n", e.n},
            {"temperature", e.temperature},
            {"v_prev_from_original", e.v_prev_from_original},
            {"capture_all_layers", e.capture_all_layers},
            {"capture_hiddens", e.capture_hiddens},
            {"verify_rollback", e.verify_rollback}};
}

EngineConfig engine_from_json(const json& j) {
    EngineConfig e;
    if (j.contains("mode")) e.mode = decode_mode_from_string(j.at("mode").get<std::string>());
    get(j, "l_crit", e.l_crit);
    get(j, "tau_phi", e.gate.tau_phi);
    get(j, "tau_h", e.gate.tau_h);
    get(j, "alpha_max", e.alpha_max);
    get(j, "max_steps", e.max_steps);
    get(j, "rollback_depth", e.rollback_depth);
    get(j, "rollback_budget", e.rollback_budget);
    get(j, "n", e.n);
    get(j, "temperature", e.temperature);
    get(j, "v_prev_from_original", e.v_prev_from_original);
    get(j, "capture_all_layers", e.capture_all_layers);
    get(j, "capture_hiddens", e.capture_hiddens);
    get(j, "verify_rollback", e.verify_rollback);
    return e;
}

}  // namespace

json config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["backend"] = to_string(cfg.backend);
    j["model"] = model_to_json(cfg.model);
    j["sim"] = sim_to_json(cfg.sim);
    j["toy"] = {{"count", cfg.toy.count},
                {"seed", cfg.toy.seed},
                {"prompt_len", cfg.toy.prompt_len},
                {"gold_len", cfg.toy.gold_len}};
    j["engine"] = engine_to_json(cfg.engine);
    j["basis"] = {{"path", cfg.basis.path},
                  {"k", cfg.basis.k},
                  {"restarts", cfg.basis.restarts},
                  {"ortho_threshold", cfg.basis.ortho_threshold}};
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    get(j, "seed", cfg.seed);
    get(j, "out_dir", cfg.out_dir);
    get(j, "workers", cfg.workers);
    if (j.contains("backend"))
        cfg.backend = backend_kind_from_string(j.at("backend").get<std::string>());
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    if (j.contains("sim")) cfg.sim = sim_from_json(j.at("sim"));
    if (j.contains("toy")) {
        const json& t = j.at("toy");
        get(t, "count", cfg.toy.count);
        get(t, "seed", cfg.toy.seed);
        get(t, "prompt_len", cfg.toy.prompt_len);
        get(t, "gold_len", cfg.toy.gold_len);
    }
    if (j.contains("engine")) cfg.engine = engine_from_json(j.at("engine"));
    if (j.contains("basis")) {
        const json& b = j.at("basis");
        get(b, "path", cfg.basis.path);
        get(b, "k", cfg.basis.k);
        get(b, "restarts", cfg.basis.restarts);
        get(b, "ortho_threshold", cfg.basis.ortho_threshold);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_config: cannot open " + path);
    json j;
    f >> j;
    return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("save_config: cannot open " + path);
    f << config_to_json(cfg).dump(2) << '\n';
}

void validate_config(const RunConfig& cfg) {
    const int layers = cfg.backend == BackendKind::Simulator ? cfg.sim.layers : cfg.model.layers;
    const int dim = cfg.backend == BackendKind::Simulator ? cfg.sim.dim : cfg.model.dim;
    if (cfg.engine.l_crit < 0 || cfg.engine.l_crit >= layers)
        throw std::invalid_argument("config: engine.l_crit out of range for backend");
    if (cfg.basis.k < 1) throw std::invalid_argument("config: basis.k must be positive");
    if (cfg.basis.restarts < 1)
        throw std::invalid_argument("config: basis.restarts must be positive");
    if (!(cfg.basis.ortho_threshold > 0.0 && cfg.basis.ortho_threshold <= 1.0))
        throw std::invalid_argument("config: basis.ortho_threshold must be in (0, 1]");
    if (cfg.engine.max_steps < 1)
        throw std::invalid_argument("config: engine.max_steps must be positive");
    if (cfg.backend == BackendKind::Transformer) {
        if (cfg.toy.count < 1) throw std::invalid_argument("config: toy.count must be positive");
        if (cfg.toy.prompt_len < 1)
            throw std::invalid_argument("config: toy.prompt_len must be positive");
        if (cfg.toy.gold_len < 2)
            throw std::invalid_argument("config: toy.gold_len must be >= 2");
        if (cfg.toy.prompt_len + cfg.engine.max_steps + 1 > cfg.model.max_steps)
            throw std::invalid_argument(
                "config: prompt_len + engine.max_steps exceeds model horizon");
    }
    if (cfg.backend == BackendKind::Simulator &&
        cfg.engine.max_steps < cfg.sim.steps_max)
        throw std::invalid_argument("config: engine.max_steps below sim.steps_max truncates runs");
    (void)dim;
}

}  // namespace lpsr
