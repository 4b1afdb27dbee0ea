#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lpsr/backend.hpp"

namespace lpsr {

struct ModelConfig {
    int layers = 8;
    int dim = 64;
    int heads = 4;
    int vocab = 64;
    std::uint64_t seed = 0;
    int max_steps = 128;
    // Test hook: skip the final norm so the unembedding is exactly linear in
    // the last residual state.
    bool identity_final_norm = false;

    bool operator==(const ModelConfig&) const = default;
};

/// A small pre-norm transformer decoder with randomly initialized weights.
/// Deterministic given the config seed; immutable after construction. Blocks
/// are standard multi-head attention plus a two-layer GELU MLP, with RMS
/// normalization in front of each sublayer and before the unembedding.
class TinyDecoder : public DecoderBackend {
public:
    explicit TinyDecoder(const ModelConfig& cfg);

    int layers() const override { return cfg_.layers; }
    int dim() const override { return cfg_.dim; }
    int vocab() const override { return cfg_.vocab; }
    int kv_dim() const override { return cfg_.dim; }
    const ModelConfig& config() const { return cfg_; }

    StepOutput step(const KvCache& cache, int prev_token,
                    const HookRequest& hooks) const override;

    StepOutput step_with_injection(const KvCache& cache, int prev_token,
                                   const HookRequest& hooks, int layer,
                                   const Vec& add) const override;

    /// Runs the given tokens through the model as inputs and returns the
    /// post-block residual at `layer` for each position.
    std::vector<Vec> teacher_forced_hiddens(std::span<const int> tokens, int layer) const;

    /// Final-norm + unembedding applied to an arbitrary hidden state: the
    /// logits the model would read off that state.
    Vec lens_logits(const Vec& hidden) const;

private:
    StepOutput forward(const KvCache& cache, int prev_token, const HookRequest& hooks,
                       int inject_layer, const Vec* add) const;
    Vec rms_norm(const Vec& x, const Vec& gain) const;

    ModelConfig cfg_;
    int head_dim_;
    float attn_scale_;

    struct Block {
        Eigen::MatrixXf wq, wk, wv, wo;  // dim x dim
        Eigen::MatrixXf w1, w2;          // ffn
        Vec g_attn, g_mlp;               // RMS norm gains
    };
    std::vector<Block> blocks_;
    Eigen::MatrixXf embed_;    // vocab x dim
    Eigen::MatrixXf pos_;      // max positions x dim
    Eigen::MatrixXf unembed_;  // vocab x dim
    Vec g_final_;
};

}  // namespace lpsr
