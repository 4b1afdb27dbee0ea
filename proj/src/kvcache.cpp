#include "lpsr/kvcache.hpp"

#include <stdexcept>

#include "lpsr/seeding.hpp"

namespace lpsr {

KvCache::KvCache(int layers, int kv_dim, int capacity)
    : layers_(layers), kv_dim_(kv_dim), capacity_(capacity) {
    if (layers < 1 || kv_dim < 1 || capacity < 0)
        throw std::invalid_argument("KvCache: invalid geometry");
    k_.reserve(layers);
    v_.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        k_.emplace_back(RowMat::Zero(capacity, kv_dim));
        v_.emplace_back(RowMat::Zero(capacity, kv_dim));
    }
}

void KvCache::append(const KvDelta& delta) {
    if (len_ >= capacity_)
        throw std::length_error("KvCache: append past capacity");
    if (static_cast<int>(delta.k.size()) != layers_ ||
        static_cast<int>(delta.v.size()) != layers_)
        throw std::invalid_argument("KvCache: delta layer count mismatch");
    for (int l = 0; l < layers_; ++l) {
        if (delta.k[l].size() != kv_dim_ || delta.v[l].size() != kv_dim_)
            throw std::invalid_argument("KvCache: delta dim mismatch");
        if (!delta.k[l].allFinite() || !delta.v[l].allFinite())
            throw std::domain_error("KvCache: non-finite entries");
    }
    for (int l = 0; l < layers_; ++l) {
        k_[l].row(len_) = delta.k[l];
        v_[l].row(len_) = delta.v[l];
    }
    ++len_;
}

void KvCache::rollback(int depth) {
    if (depth < 0 || depth > len_)
        throw std::domain_error("KvCache: rollback depth out of range");
    len_ -= depth;
}

KvCheckpoint KvCache::checkpoint() const { return KvCheckpoint{len_, digest()}; }

void KvCache::rollback_to(const KvCheckpoint& ckpt) {
    if (ckpt.len > len_)
        throw std::domain_error("KvCache: checkpoint ahead of current length");
    len_ = ckpt.len;
}

std::uint64_t KvCache::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::size_t row_bytes = static_cast<std::size_t>(len_) * kv_dim_ * sizeof(float);
    for (int l = 0; l < layers_; ++l) {
        h = fnv1a64(k_[l].data(), row_bytes, h);
        h = fnv1a64(v_[l].data(), row_bytes, h);
    }
    return h;
}

}  // namespace lpsr
