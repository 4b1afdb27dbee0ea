#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "lpsr/kvcache.hpp"
#include "lpsr/numerics.hpp"

namespace lpsr {

// Vocabulary index 0 is reserved as end-of-sequence everywhere.
inline constexpr int kEosToken = 0;

// Which residual streams a step should expose. `lens_layer` selects the layer
// whose hidden state is projected to logits for the entropy gate (-1: none).
struct HookRequest {
    std::vector<int> layers;
    int lens_layer = -1;
};

struct StepOutput {
    int token = -1;    // greedy choice, argmax of logits
    Vec logits;        // output distribution over the vocabulary
    Vec lens_logits;   // unembedded hidden at lens_layer (empty if none)
    std::vector<std::pair<int, Vec>> hidden;  // (layer, post-block residual), pre-injection
    KvDelta kv_delta;  // this step's cache rows; adopting the step = appending them

    const Vec& hidden_at(int layer) const {
        for (const auto& [l, h] : hidden)
            if (l == layer) return h;
        throw std::out_of_range("StepOutput: layer not hooked");
    }
};

/// One autoregressive decode interface over both model backends. A step reads
/// the cache (never mutates it) and returns everything the caller needs to
/// either adopt the step (append kv_delta) or discard it.
class DecoderBackend {
public:
    virtual ~DecoderBackend() = default;

    virtual int layers() const = 0;
    virtual int dim() const = 0;
    virtual int vocab() const = 0;
    virtual int kv_dim() const = 0;

    virtual StepOutput step(const KvCache& cache, int prev_token,
                            const HookRequest& hooks) const = 0;

    /// Same as step, but `add` is summed into the residual stream right after
    /// block `layer`, affecting every later block and this step's cache rows
    /// for those blocks. Hooked hiddens report the pre-injection state.
    virtual StepOutput step_with_injection(const KvCache& cache, int prev_token,
                                           const HookRequest& hooks, int layer,
                                           const Vec& add) const = 0;
};

}  // namespace lpsr
