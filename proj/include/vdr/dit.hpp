#pragma once

#include <string>
#include <vector>

#include "vdr/attention.hpp"
#include "vdr/common.hpp"
#include "vdr/nn.hpp"
#include "vdr/tape.hpp"

namespace vdr {

// [D, C, H, W] -> [D, N, p*p*C] patch tokens (pure data movement, no params).
template <typename T>
Var patch_tokens(Tape<T>& t, Var x, int64_t p) {
    const auto& s = t.val(x).shape();
    if (s.size() != 4) throw DataError("patch_tokens: expected [D, C, H, W]");
    const int64_t d = s[0], c = s[1], h = s[2], w = s[3];
    if (h % p != 0 || w % p != 0)
        throw DataError("patch_tokens: H and W must be multiples of the patch size");
    Var r = t.reshape(x, {d, c, h / p, p, w / p, p});
    Var q = t.permute(r, {0, 2, 4, 3, 5, 1});  // [D, H/p, W/p, p, p, C]
    return t.reshape(q, {d, (h / p) * (w / p), p * p * c});
}

// Inverse of patch_tokens: [D, N, p*p*C] -> [D, C, H, W].
template <typename T>
Var tokens_to_image(Tape<T>& t, Var tokens, int64_t h, int64_t w, int64_t p, int64_t c) {
    const auto& s = t.val(tokens).shape();
    if (s.size() != 3 || s[1] != (h / p) * (w / p) || s[2] != p * p * c)
        throw DataError("tokens_to_image: token grid does not match target image");
    Var r = t.reshape(tokens, {s[0], h / p, w / p, p, p, c});
    Var q = t.permute(r, {0, 5, 1, 3, 2, 4});  // [D, C, H/p, p, W/p, p]
    return t.reshape(q, {s[0], c, h, w});
}

// Transformer block operating on the [D, N, dim] token grid with factorized
// lateral/axial attention.  Conditioning enters two ways per block:
//   * local tokens are projected, gated and normalised, then added to the
//     stream (dense spatial conditioning), and
//   * the fused global vector generates shift/scale pairs applied to the
//     attention and MLP branch outputs.  The modulation generator is
//     zero-initialised so both branches vanish at init and the block starts
//     as identity-plus-injection.
template <typename T>
struct DitBlock {
    LinearLayer<T> inj;        // p*p*C_cond -> dim
    LayerNormLayer<T> inj_ln;  // affine norm on the injected stream
    LinearLayer<T> mod;        // dim -> 4*dim (shift_a, scale_a, shift_m, scale_m)
    DecomposedAttention<T> attn;
    MlpBlock<T> mlp;
    int64_t dim = 0;

    DitBlock() = default;
    DitBlock(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim_, int64_t heads,
             int64_t cond_width, Rng& rng)
        : inj(reg, prefix + ".inj", cond_width, dim_, rng),
          inj_ln(reg, prefix + ".inj_ln", dim_),
          mod(reg, prefix + ".mod", dim_, 4 * dim_, rng, Init::kZero),
          attn(reg, prefix + ".attn", dim_, heads, rng),
          mlp(reg, prefix + ".mlp", dim_, rng),
          dim(dim_) {}

    struct Out {
        Var tokens;
        Var injection;
    };

    // s: [D, N, dim]; cond_tokens: [D, N, cond_width]; c_fused: [1, dim].
    Out apply(Tape<T>& t, ParamRegistry<T>& reg, Var s, Var cond_tokens, Var c_fused) const {
        const auto& ss = t.val(s).shape();
        const int64_t d = ss[0], n = ss[1];
        const int64_t cw = t.val(cond_tokens).shape()[2];

        Var raw = inj.apply(t, reg, t.reshape(cond_tokens, {d * n, cw}));
        Var injected = t.reshape(inj_ln.apply(t, reg, t.silu(raw)), {d, n, dim});
        s = t.add(s, injected);

        Var m4 = t.reshape(mod.apply(t, reg, t.silu(c_fused)), {4 * dim});
        Var shift_a = t.slice_last(m4, 0, dim);
        Var scale_a = t.slice_last(m4, dim, 2 * dim);
        Var shift_m = t.slice_last(m4, 2 * dim, 3 * dim);
        Var scale_m = t.slice_last(m4, 3 * dim, 4 * dim);

        Var h = attn.apply(t, reg, t.layernorm(s));
        s = t.add(s, t.row_affine(h, scale_a, shift_a));

        Var mlp_out = mlp.apply(t, reg, t.reshape(t.layernorm(s), {d * n, dim}));
        s = t.add(s, t.row_affine(t.reshape(mlp_out, {d, n, dim}), scale_m, shift_m));
        return {s, injected};
    }
};

struct DenoiserConfig {
    int64_t latent_channels = 4;
    int64_t depth = 12;  // slices in the latent stack
    int64_t latent_h = 12, latent_w = 12;
    int64_t dim = 128, heads = 4, blocks = 6, patch = 2;

    int64_t tokens_per_slice() const {
        return (latent_h / patch) * (latent_w / patch);
    }
};

// Captured token-stream snapshots for inspecting the identity-at-init
// behaviour and the conditioning pathway.
template <typename T>
struct DenoiserTrace {
    Tensor<T> tokens_in, tokens_out, injection_sum;
};

// Noise predictor on the latent grid.  The noisy latents and the local
// condition grid are concatenated channel-wise, patchified into per-slice
// tokens, tagged with learned lateral and axial positions, and run through a
// stack of factorized-attention blocks.  The output head is zero-initialised
// so the initial prediction is exactly zero.
template <typename T>
struct Denoiser {
    DenoiserConfig cfg;
    LinearLayer<T> embed;
    int64_t pos_lat = -1, pos_ax = -1;
    std::vector<DitBlock<T>> blocks;
    LinearLayer<T> head;

    Denoiser() = default;
    Denoiser(ParamRegistry<T>& reg, const std::string& prefix, const DenoiserConfig& cfg_,
             Rng& rng)
        : cfg(cfg_) {
        if (cfg.latent_h % cfg.patch != 0 || cfg.latent_w % cfg.patch != 0)
            throw UsageError("denoiser: latent grid must be a multiple of the patch size");
        const int64_t pc = cfg.patch * cfg.patch * cfg.latent_channels;
        const int64_t n = cfg.tokens_per_slice();
        embed = LinearLayer<T>(reg, prefix + ".embed", 2 * pc, cfg.dim, rng);
        pos_lat = reg.add(prefix + ".pos_lat", normal_tensor<T>({n, cfg.dim}, 0.02, rng));
        pos_ax = reg.add(prefix + ".pos_ax", normal_tensor<T>({cfg.depth, cfg.dim}, 0.02, rng));
        blocks.reserve(cfg.blocks);
        for (int64_t b = 0; b < cfg.blocks; ++b)
            blocks.emplace_back(reg, prefix + ".blk" + std::to_string(b), cfg.dim, cfg.heads, pc,
                                rng);
        head = LinearLayer<T>(reg, prefix + ".head", cfg.dim, pc, rng, Init::kZero);
    }

    // z_t, c_local: [D, C, h, w] on the latent grid; c_fused: [1, dim].
    // Returns the noise estimate with the shape of z_t.
    Var forward(Tape<T>& t, ParamRegistry<T>& reg, Var z_t, Var c_local, Var c_fused,
                DenoiserTrace<T>* trace = nullptr) const {
        const auto& zs = t.val(z_t).shape();
        if (zs.size() != 4 || zs[0] != cfg.depth || zs[1] != cfg.latent_channels ||
            zs[2] != cfg.latent_h || zs[3] != cfg.latent_w)
            throw DataError("denoiser: latent stack does not match the configured grid");
        if (t.val(c_local).shape() != zs)
            throw DataError("denoiser: condition grid must match the latent grid");

        const int64_t p = cfg.patch, c = cfg.latent_channels;
        const int64_t d = cfg.depth, n = cfg.tokens_per_slice();
        Var x = t.concat(z_t, c_local, 1);
        Var xt = patch_tokens(t, x, p);       // [D, N, 2*p*p*C]
        Var ct = patch_tokens(t, c_local, p);  // [D, N, p*p*C]

        Var s = t.reshape(embed.apply(t, reg, t.reshape(xt, {d * n, 2 * p * p * c})),
                          {d, n, cfg.dim});
        s = t.add_bcast0(s, t.param(reg, pos_lat));
        s = t.add_bcast1(s, t.param(reg, pos_ax));
        if (trace) trace->tokens_in = t.val(s);

        Var inj_sum{};
        for (const auto& blk : blocks) {
            auto out = blk.apply(t, reg, s, ct, c_fused);
            s = out.tokens;
            inj_sum = inj_sum.valid() ? t.add(inj_sum, out.injection) : out.injection;
        }
        if (trace) {
            trace->tokens_out = t.val(s);
            trace->injection_sum = t.val(inj_sum);
        }

        Var out_tokens = head.apply(t, reg, t.reshape(t.layernorm(s), {d * n, cfg.dim}));
        return tokens_to_image(t, t.reshape(out_tokens, {d, n, p * p * c}), cfg.latent_h,
                               cfg.latent_w, p, c);
    }
};

}  // namespace vdr
