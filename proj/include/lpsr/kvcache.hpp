#pragma once

#include <cstdint>
#include <vector>

#include "lpsr/numerics.hpp"

namespace lpsr {

// One decode step's key/value rows, one pair per layer. Produced by a backend
// step; adopting the step means appending this to the cache.
struct KvDelta {
    std::vector<Vec> k;
    std::vector<Vec> v;
};

struct KvCheckpoint {
    int len = 0;
    std::uint64_t digest = 0;
};

/// Per-layer key/value store with a single logical length shared by all
/// layers. Rollback is a length decrement: bytes beyond `len` are dead and
/// never read, which makes rewinding O(1) and replay byte-exact.
class KvCache {
public:
    KvCache(int layers, int kv_dim, int capacity);

    int layers() const { return layers_; }
    int kv_dim() const { return kv_dim_; }
    int capacity() const { return capacity_; }
    int len() const { return len_; }

    /// Appends one step across all layers. Rejects non-finite rows and
    /// appends past capacity.
    void append(const KvDelta& delta);

    /// Drops the last `depth` steps. depth must be <= len().
    void rollback(int depth);

    KvCheckpoint checkpoint() const;

    /// Rewinds to a checkpointed length. The checkpoint must not be ahead of
    /// the current length.
    void rollback_to(const KvCheckpoint& ckpt);

    /// FNV-1a over the live region (rows [0, len) of every layer's K and V).
    std::uint64_t digest() const;

    // Read access for backends/tests. Full storage; live rows are [0, len).
    const RowMat& keys(int layer) const { return k_[layer]; }
    const RowMat& values(int layer) const { return v_[layer]; }

private:
    int layers_;
    int kv_dim_;
    int capacity_;
    int len_ = 0;
    std::vector<RowMat> k_;
    std::vector<RowMat> v_;
};

}  // namespace lpsr
