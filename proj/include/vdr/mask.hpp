#pragma once

#include <cmath>
#include <vector>

#include "vdr/rng.hpp"
#include "vdr/tensor.hpp"
#include "vdr/volume.hpp"

namespace vdr {

// Token-level mask over the (depth, lateral-token) grid. ratio 0 marks the
// identity branch; otherwise exactly round(ratio * D * N) positions are true.
struct MaskSpec {
    int64_t depth = 0;
    int64_t tokens = 0;  // lateral token count N per slice
    std::vector<uint8_t> token_mask;  // D*N entries, 1 = masked
    double ratio = 0.0;
    uint64_t seed = 0;

    bool at(int64_t z, int64_t n) const { return token_mask[static_cast<size_t>(z * tokens + n)] != 0; }
    int64_t count() const {
        int64_t c = 0;
        for (auto m : token_mask) c += m;
        return c;
    }
};

namespace detail {

inline void fill_mask_positions(MaskSpec& m, Rng& rng) {
    const int64_t total = m.depth * m.tokens;
    const int64_t want = std::llround(m.ratio * static_cast<double>(total));
    // partial Fisher-Yates: first `want` entries of a uniform permutation
    std::vector<int64_t> idx(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) idx[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < want; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.uniform_index(static_cast<size_t>(total - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        m.token_mask[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
    }
}

}  // namespace detail

// Deterministic mask at a caller-chosen ratio; the count rule is
// round(ratio * D * N) positions drawn uniformly without replacement.
inline MaskSpec sample_mask_with_ratio(int64_t depth, int64_t tokens, double ratio, uint64_t seed) {
    if (depth < 1 || tokens < 1) throw UsageError("mask grid dims must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw UsageError("mask ratio must lie in [0,1]");
    MaskSpec m;
    m.depth = depth;
    m.tokens = tokens;
    m.seed = seed;
    m.ratio = ratio;
    m.token_mask.assign(static_cast<size_t>(depth * tokens), 0);
    if (ratio > 0.0) {
        Rng rng(seed, 0x3a5d);
        detail::fill_mask_positions(m, rng);
    }
    return m;
}

// With probability 0.9, mask a uniform draw of round(r * D * N) positions with
// r ~ U[0.5, 0.75]; with probability 0.1 return the identity mask.
inline MaskSpec sample_mask(int64_t depth, int64_t tokens, uint64_t seed) {
    if (depth < 1 || tokens < 1) throw UsageError("mask grid dims must be >= 1");
    MaskSpec m;
    m.depth = depth;
    m.tokens = tokens;
    m.seed = seed;
    m.token_mask.assign(static_cast<size_t>(depth * tokens), 0);
    Rng rng(seed, 0x3a5c);
    if (rng.uniform() < 0.1) return m;  // identity branch
    m.ratio = rng.uniform(0.5, 0.75);
    detail::fill_mask_positions(m, rng);
    return m;
}

// Zero out masked rows of a (D, N, dim) token tensor.
inline Tensor<float> apply_mask_tokens(const Tensor<float>& tokens, const MaskSpec& m) {
    if (tokens.rank() != 3 || tokens.shape()[0] != m.depth || tokens.shape()[1] != m.tokens)
        throw DataError("token tensor does not match mask grid");
    Tensor<float> out = tokens;
    const int64_t dim = tokens.shape()[2];
    for (int64_t z = 0; z < m.depth; ++z)
        for (int64_t n = 0; n < m.tokens; ++n)
            if (m.at(z, n))
                for (int64_t c = 0; c < dim; ++c) out.at(z, n, c) = 0.0f;
    return out;
}

struct MaskedVolume {
    Volume masked;
    Volume mask_channel;  // same dims, 1 where masked
};

// Zero-fill the pixel blocks behind each masked token. The token grid tiles
// the volume as (D / depth) x (H / gh) x (W / gw) blocks with N = gh * gw.
inline MaskedVolume apply_mask_volume(const Volume& v, const MaskSpec& m, int64_t gh, int64_t gw) {
    if (gh * gw != m.tokens) throw DataError("mask lateral grid does not factor token count");
    if (v.depth % m.depth != 0 || v.height % gh != 0 || v.width % gw != 0)
        throw DataError("volume dims not divisible by mask grid");
    const int64_t bz = v.depth / m.depth;
    const int64_t by = v.height / gh;
    const int64_t bx = v.width / gw;
    MaskedVolume out;
    out.masked = v;
    out.mask_channel = Volume(v.depth, v.height, v.width);
    out.mask_channel.spacing = v.spacing;
    for (int64_t z = 0; z < m.depth; ++z)
        for (int64_t iy = 0; iy < gh; ++iy)
            for (int64_t ix = 0; ix < gw; ++ix) {
                if (!m.at(z, iy * gw + ix)) continue;
                for (int64_t dz = 0; dz < bz; ++dz)
                    for (int64_t dy = 0; dy < by; ++dy)
                        for (int64_t dx = 0; dx < bx; ++dx) {
                            out.masked.at(z * bz + dz, iy * by + dy, ix * bx + dx) = 0.0f;
                            out.mask_channel.at(z * bz + dz, iy * by + dy, ix * bx + dx) = 1.0f;
                        }
            }
    return out;
}

}  // namespace vdr
