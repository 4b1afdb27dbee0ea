#include "lpsr/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lpsr {
namespace {

constexpr float kRmsEps = 1e-6f;

float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

Eigen::MatrixXf random_matrix(int rows, int cols, float stddev, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, stddev);
    Eigen::MatrixXf m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

}  // namespace

TinyDecoder::TinyDecoder(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.layers < 1 || cfg.dim < 1 || cfg.heads < 1 || cfg.vocab < 2 || cfg.max_steps < 1)
        throw std::invalid_argument("ModelConfig: all geometry fields must be positive");
    if (cfg.dim % cfg.heads != 0)
        throw std::invalid_argument("ModelConfig: dim must be divisible by heads");
    head_dim_ = cfg.dim / cfg.heads;
    attn_scale_ = 1.0f / std::sqrt(static_cast<float>(head_dim_));

    std::mt19937_64 rng(cfg.seed);
    const float proj_std = 1.0f / std::sqrt(static_cast<float>(cfg.dim));
    const int ffn = 4 * cfg.dim;
    const float ffn_std = 1.0f / std::sqrt(static_cast<float>(ffn));
    std::normal_distribution<float> gain_noise(0.0f, 0.1f);

    blocks_.resize(cfg.layers);
    for (auto& b : blocks_) {
        b.wq = random_matrix(cfg.dim, cfg.dim, proj_std, rng);
        b.wk = random_matrix(cfg.dim, cfg.dim, proj_std, rng);
        b.wv = random_matrix(cfg.dim, cfg.dim, proj_std, rng);
        b.wo = random_matrix(cfg.dim, cfg.dim, proj_std, rng);
        b.w1 = random_matrix(ffn, cfg.dim, proj_std, rng);
        b.w2 = random_matrix(cfg.dim, ffn, ffn_std, rng);
        b.g_attn = Vec::Ones(cfg.dim);
        b.g_mlp = Vec::Ones(cfg.dim);
        for (int i = 0; i < cfg.dim; ++i) {
            b.g_attn[i] += gain_noise(rng);
            b.g_mlp[i] += gain_noise(rng);
        }
    }
    embed_ = random_matrix(cfg.vocab, cfg.dim, 1.0f, rng);
    pos_ = random_matrix(cfg.max_steps, cfg.dim, 0.5f, rng);
    unembed_ = random_matrix(cfg.vocab, cfg.dim, proj_std, rng);
    g_final_ = Vec::Ones(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) g_final_[i] += gain_noise(rng);
}

Vec TinyDecoder::rms_norm(const Vec& x, const Vec& gain) const {
    const float ms = x.squaredNorm() / static_cast<float>(x.size());
    return (x.array() / std::sqrt(ms + kRmsEps)).matrix().cwiseProduct(gain);
}

Vec TinyDecoder::lens_logits(const Vec& hidden) const {
    if (hidden.size() != cfg_.dim)
        throw std::invalid_argument("lens_logits: dimension mismatch");
    if (cfg_.identity_final_norm) return unembed_ * hidden;
    return unembed_ * rms_norm(hidden, g_final_);
}

StepOutput TinyDecoder::forward(const KvCache& cache, int prev_token,
                                const HookRequest& hooks, int inject_layer,
                                const Vec* add) const {
    if (prev_token < 0 || prev_token >= cfg_.vocab)
        throw std::domain_error("TinyDecoder: token out of vocabulary");
    if (cache.layers() != cfg_.layers || cache.kv_dim() != cfg_.dim)
        throw std::invalid_argument("TinyDecoder: cache geometry mismatch");
    const int pos = cache.len();
    if (pos >= cfg_.max_steps)
        throw std::length_error("TinyDecoder: position beyond model horizon");
    if (hooks.lens_layer >= cfg_.layers)
        throw std::invalid_argument("TinyDecoder: lens layer out of range");
    if (add != nullptr) {
        if (inject_layer < 0 || inject_layer >= cfg_.layers)
            throw std::invalid_argument("TinyDecoder: injection layer out of range");
        if (add->size() != cfg_.dim)
            throw std::invalid_argument("TinyDecoder: injection dimension mismatch");
    }

    StepOutput out;
    out.kv_delta.k.resize(cfg_.layers);
    out.kv_delta.v.resize(cfg_.layers);

    Vec h = embed_.row(prev_token).transpose() + pos_.row(pos).transpose();
    Vec lens_hidden;

    for (int l = 0; l < cfg_.layers; ++l) {
        const Block& b = blocks_[l];

        // Attention sublayer.
        const Vec a = rms_norm(h, b.g_attn);
        const Vec q = b.wq * a;
        const Vec k = b.wk * a;
        const Vec v = b.wv * a;
        out.kv_delta.k[l] = k;
        out.kv_delta.v[l] = v;

        const RowMat& keys = cache.keys(l);
        const RowMat& values = cache.values(l);
        Vec attn(cfg_.dim);
        for (int hd = 0; hd < cfg_.heads; ++hd) {
            const int off = hd * head_dim_;
            Eigen::VectorXd scores(pos + 1);
            if (pos > 0)
                scores.head(pos) = (keys.topRows(pos).middleCols(off, head_dim_) *
                                    q.segment(off, head_dim_))
                                       .cast<double>();
            scores[pos] = q.segment(off, head_dim_).dot(k.segment(off, head_dim_));
            scores *= attn_scale_;
            const double mx = scores.maxCoeff();
            Eigen::VectorXd w = (scores.array() - mx).exp();
            w /= w.sum();
            Eigen::VectorXd acc = w[pos] * v.segment(off, head_dim_).cast<double>();
            if (pos > 0)
                acc += values.topRows(pos).middleCols(off, head_dim_).transpose().cast<double>() *
                       w.head(pos);
            attn.segment(off, head_dim_) = acc.cast<float>();
        }
        h += b.wo * attn;

        // MLP sublayer.
        const Vec m = rms_norm(h, b.g_mlp);
        Vec inner = b.w1 * m;
        for (int i = 0; i < inner.size(); ++i) inner[i] = gelu(inner[i]);
        h += b.w2 * inner;

        // Post-block residual is what hooks observe; injection lands after.
        for (int hooked : hooks.layers) {
            if (hooked == l) {
                out.hidden.emplace_back(l, h);
                break;
            }
        }
        if (l == hooks.lens_layer) lens_hidden = h;
        if (add != nullptr && l == inject_layer) h += *add;
    }

    const Vec f = cfg_.identity_final_norm ? h : rms_norm(h, g_final_);
    out.logits = unembed_ * f;
    int best = 0;
    for (int i = 1; i < out.logits.size(); ++i)
        if (out.logits[i] > out.logits[best]) best = i;
    out.token = best;
    if (lens_hidden.size() > 0) out.lens_logits = lens_logits(lens_hidden);
    return out;
}

StepOutput TinyDecoder::step(const KvCache& cache, int prev_token,
                             const HookRequest& hooks) const {
    return forward(cache, prev_token, hooks, -1, nullptr);
}

StepOutput TinyDecoder::step_with_injection(const KvCache& cache, int prev_token,
                                            const HookRequest& hooks, int layer,
                                            const Vec& add) const {
    return forward(cache, prev_token, hooks, layer, &add);
}

std::vector<Vec> TinyDecoder::teacher_forced_hiddens(std::span<const int> tokens,
                                                     int layer) const {
    if (tokens.empty())
        throw std::invalid_argument("teacher_forced_hiddens: empty sequence");
    if (layer < 0 || layer >= cfg_.layers)
        throw std::invalid_argument("teacher_forced_hiddens: layer out of range");
    KvCache cache(cfg_.layers, cfg_.dim, static_cast<int>(tokens.size()));
    HookRequest hooks;
    hooks.layers = {layer};
    std::vector<Vec> result;
    result.reserve(tokens.size());
    for (int tok : tokens) {
        StepOutput out = step(cache, tok, hooks);
        result.push_back(out.hidden_at(layer));
        cache.append(out.kv_delta);
    }
    return result;
}

}  // namespace lpsr
