#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "vdr/common.hpp"
#include "vdr/nn.hpp"
#include "vdr/tape.hpp"

namespace vdr {

// Running multiply-accumulate totals for the attention-score GEMMs, split by
// stage so the D*N^2 (lateral) vs N*D^2 (axial) scaling can be observed
// directly.  Counts are incremented when a score matrix is issued, once per
// forward pass, and are not touched by backward.
struct AttnMacCounter {
    uint64_t lateral = 0;
    uint64_t axial = 0;
    void reset() { lateral = axial = 0; }
};

inline AttnMacCounter& attn_macs() {
    static AttnMacCounter counter;
    return counter;
}

enum class AttnAxis { kLateral, kAxial };

// Multi-head self-attention over the trailing axis of a [B, L, dim] batch of
// token rows.  Each of the B rows-of-tokens attends only within itself.
template <typename T>
struct AttentionStage {
    LinearLayer<T> q, k, v, o;
    int64_t dim = 0, heads = 0;

    AttentionStage() = default;
    AttentionStage(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim_, int64_t heads_,
                   Rng& rng)
        : q(reg, prefix + ".q", dim_, dim_, rng),
          k(reg, prefix + ".k", dim_, dim_, rng),
          v(reg, prefix + ".v", dim_, dim_, rng),
          o(reg, prefix + ".o", dim_, dim_, rng),
          dim(dim_),
          heads(heads_) {
        if (dim_ % heads_ != 0) throw UsageError("attention: dim must be divisible by heads");
    }

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x, AttnAxis axis) const {
        const auto& shape = t.val(x).shape();
        if (shape.size() != 3 || shape[2] != dim)
            throw DataError("attention: expected [B, L, dim] input");
        const int64_t b = shape[0], l = shape[1], dh = dim / heads;

        // [B, L, dim] -> per-head batches [B*heads, L, dh].
        auto split = [&](const LinearLayer<T>& proj) {
            Var rows = proj.apply(t, reg, t.reshape(x, {b * l, dim}));
            Var grouped = t.reshape(rows, {b, l, heads, dh});
            return t.reshape(t.permute(grouped, {0, 2, 1, 3}), {b * heads, l, dh});
        };
        Var qh = split(q), kh = split(k), vh = split(v);

        uint64_t macs = static_cast<uint64_t>(b) * static_cast<uint64_t>(heads) *
                        static_cast<uint64_t>(l) * static_cast<uint64_t>(l) *
                        static_cast<uint64_t>(dh);
        if (axis == AttnAxis::kLateral)
            attn_macs().lateral += macs;
        else
            attn_macs().axial += macs;

        Var scores = t.scale(t.bmm_nt(qh, kh), T(1.0 / std::sqrt(static_cast<double>(dh))));
        Var ctx = t.bmm(t.softmax_last(scores), vh);

        // [B*heads, L, dh] -> [B*L, dim] -> output projection.
        Var merged = t.reshape(t.permute(t.reshape(ctx, {b, heads, l, dh}), {0, 2, 1, 3}),
                               {b * l, dim});
        return t.reshape(o.apply(t, reg, merged), {b, l, dim});
    }
};

// Factorized attention over a token grid [D, N, dim]: the lateral stage mixes
// the N in-slice tokens independently per slice, the axial stage mixes the D
// through-stack tokens independently per lateral site.
template <typename T>
struct DecomposedAttention {
    AttentionStage<T> lateral, axial;

    DecomposedAttention() = default;
    DecomposedAttention(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim,
                        int64_t heads, Rng& rng)
        : lateral(reg, prefix + ".lat", dim, heads, rng),
          axial(reg, prefix + ".ax", dim, heads, rng) {}

    Var apply_lateral(Tape<T>& t, ParamRegistry<T>& reg, Var s) const {
        return lateral.apply(t, reg, s, AttnAxis::kLateral);
    }

    Var apply_axial(Tape<T>& t, ParamRegistry<T>& reg, Var s) const {
        Var swapped = t.permute(s, {1, 0, 2});  // [N, D, dim]
        Var mixed = axial.apply(t, reg, swapped, AttnAxis::kAxial);
        return t.permute(mixed, {1, 0, 2});
    }

    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var s) const {
        return apply_axial(t, reg, apply_lateral(t, reg, s));
    }
};

}  // namespace vdr
