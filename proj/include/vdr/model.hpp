#pragma once

#include <json.hpp>
#include <string>

#include "vdr/codec.hpp"
#include "vdr/common.hpp"
#include "vdr/condition.hpp"
#include "vdr/diffusion.hpp"
#include "vdr/dit.hpp"
#include "vdr/refiner.hpp"
#include "vdr/rng.hpp"
#include "vdr/tensor.hpp"
#include "vdr/volume.hpp"

namespace vdr {

// Architecture and target-geometry description.  A model is constructed from
// this plus an init seed; two constructions from the same config produce the
// same parameter layout (names, shapes, order), which is what checkpoint
// loading relies on.
struct ModelConfig {
    int64_t dim = 128, heads = 4, blocks = 6, patch = 2;
    int64_t latent_channels = 4;
    int64_t reduction = 8;  // codec lateral factor (fixed by the codec)
    int64_t depth = 12, target_h = 96, target_w = 96;
    int64_t refiner_feat = 8, refiner_width = 8;
    int64_t diffusion_steps = 1000;
    double beta_lo = 1e-4, beta_hi = 0.02;

    void validate() const {
        if (dim < 1 || heads < 1 || blocks < 1 || patch < 1 || latent_channels < 1)
            throw UsageError("model config: architecture fields must be >= 1");
        if (dim % heads != 0) throw UsageError("model config: dim must be divisible by heads");
        if (reduction != 8) throw UsageError("model config: codec reduction factor is fixed at 8");
        if (depth < 1 || target_h < 1 || target_w < 1)
            throw UsageError("model config: target dims must be >= 1");
        if (target_h % reduction != 0 || target_w % reduction != 0)
            throw UsageError("model config: target dims must be multiples of the reduction");
        if ((target_h / reduction) % patch != 0 || (target_w / reduction) % patch != 0)
            throw UsageError("model config: latent dims must be multiples of the patch size");
        if (refiner_feat < 1 || refiner_width < 1)
            throw UsageError("model config: refiner widths must be >= 1");
        if (diffusion_steps < 2) throw UsageError("model config: diffusion steps must be >= 2");
        if (!(0.0 < beta_lo && beta_lo <= beta_hi && beta_hi < 1.0))
            throw UsageError("model config: need 0 < beta_lo <= beta_hi < 1");
    }

    int64_t latent_h() const { return target_h / reduction; }
    int64_t latent_w() const { return target_w / reduction; }

    DenoiserConfig denoiser() const {
        DenoiserConfig d;
        d.latent_channels = latent_channels;
        d.depth = depth;
        d.latent_h = latent_h();
        d.latent_w = latent_w();
        d.dim = dim;
        d.heads = heads;
        d.blocks = blocks;
        d.patch = patch;
        return d;
    }

    nlohmann::json to_json() const {
        return {{"dim", dim},
                {"heads", heads},
                {"blocks", blocks},
                {"patch", patch},
                {"latent_channels", latent_channels},
                {"reduction", reduction},
                {"depth", depth},
                {"target_h", target_h},
                {"target_w", target_w},
                {"refiner_feat", refiner_feat},
                {"refiner_width", refiner_width},
                {"diffusion_steps", diffusion_steps},
                {"beta_lo", beta_lo},
                {"beta_hi", beta_hi}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.dim = j.value("dim", c.dim);
        c.heads = j.value("heads", c.heads);
        c.blocks = j.value("blocks", c.blocks);
        c.patch = j.value("patch", c.patch);
        c.latent_channels = j.value("latent_channels", c.latent_channels);
        c.reduction = j.value("reduction", c.reduction);
        c.depth = j.value("depth", c.depth);
        c.target_h = j.value("target_h", c.target_h);
        c.target_w = j.value("target_w", c.target_w);
        c.refiner_feat = j.value("refiner_feat", c.refiner_feat);
        c.refiner_width = j.value("refiner_width", c.refiner_width);
        c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
        c.beta_lo = j.value("beta_lo", c.beta_lo);
        c.beta_hi = j.value("beta_hi", c.beta_hi);
        c.validate();
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

// [D, H, W] volume -> [D, 1, H, W] tensor.
template <typename T = float>
Tensor<T> volume_to_tensor(const Volume& v) {
    Tensor<T> t({v.depth, 1, v.height, v.width});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(v.data[static_cast<size_t>(i)]);
    return t;
}

// [D, 1, H, W] tensor -> volume, optionally clamped to [0,1].
template <typename T>
Volume tensor_to_volume(const Tensor<T>& t, bool clamp01 = true) {
    if (t.rank() != 4 || t.dim(1) != 1) throw DataError("tensor_to_volume: expected [D,1,H,W]");
    Volume v(t.dim(0), t.dim(2), t.dim(3));
    for (int64_t i = 0; i < t.size(); ++i) {
        float f = static_cast<float>(t[i]);
        if (clamp01) f = std::min(1.0f, std::max(0.0f, f));
        v.data[static_cast<size_t>(i)] = f;
    }
    return v;
}

// The full restoration model: codec, condition encoders, timestep embedding,
// denoiser, and refiner sharing one parameter registry.
template <typename T>
struct RestorationModel {
    ModelConfig cfg;
    ParamRegistry<T> reg;
    SliceCodec<T> codec;
    LocalConditionEncoder<T> local;
    GlobalConditionEncoder<T> global;
    TimeEmbed<T> time;
    Denoiser<T> den;
    Refiner<T> refiner;
    DiffusionSchedule sched;

    RestorationModel(const ModelConfig& cfg_, uint64_t init_seed) : cfg(cfg_) {
        cfg.validate();
        Rng rng(init_seed, 0x3317);
        codec = SliceCodec<T>(reg, "codec", cfg.latent_channels, rng);
        local = LocalConditionEncoder<T>(reg, "cond.local", cfg.latent_channels, rng);
        global = GlobalConditionEncoder<T>(reg, "cond.global", cfg.dim, rng);
        time = TimeEmbed<T>(reg, "cond.time", cfg.dim, rng);
        den = Denoiser<T>(reg, "den", cfg.denoiser(), rng);
        refiner = Refiner<T>(reg, "refiner", cfg.latent_channels, rng, cfg.refiner_feat,
                             cfg.refiner_width);
        sched = DiffusionSchedule::linear(cfg.diffusion_steps, cfg.beta_lo, cfg.beta_hi);
    }

    bool is_codec_param(int64_t pid) const {
        return reg.at(pid).name.rfind("codec.", 0) == 0;
    }

    // ---- host-side (no-grad) forward helpers -----------------------------

    // Encode a [D, H, W] volume into the latent stack [D, C, h, w].
    Tensor<T> encode_volume(const Volume& v) {
        Tape<T> t;
        return t.val(codec.encode(t, reg, t.input(volume_to_tensor<T>(v))));
    }

    // Local condition grid from a resampled-to-target volume plus optional
    // mask channel ([D, 1, H, W]; zeros when absent).
    Tensor<T> condition_local(const Volume& lq_up, const Tensor<T>* mask_channel = nullptr) {
        Tensor<T> img = volume_to_tensor<T>(lq_up);
        Tensor<T> mask = mask_channel ? *mask_channel
                                      : Tensor<T>({img.dim(0), 1, img.dim(2), img.dim(3)});
        Tape<T> t;
        Var x = t.concat(t.input(img), t.input(mask), 1);
        return t.val(local.apply(t, reg, x));
    }

    // Global context vector [1, dim].
    Tensor<T> condition_global(const Volume& lq_up) {
        Tape<T> t;
        return t.val(global.apply(t, reg, t.input(volume_to_tensor<T>(lq_up))));
    }

    // Fused conditioning vector for one timestep: time embedding + c_global.
    Tensor<T> fuse_condition(const Tensor<T>& c_global, int64_t step) {
        Tape<T> t;
        Var cf = t.add(time.apply(t, reg, static_cast<double>(step)), t.input(c_global));
        return t.val(cf);
    }

    // One denoiser evaluation (no grad).
    Tensor<T> predict_noise(const Tensor<T>& z_t, const Tensor<T>& c_local,
                            const Tensor<T>& c_fused) {
        Tape<T> t;
        return t.val(den.forward(t, reg, t.input(z_t), t.input(c_local), t.input(c_fused)));
    }

    // Refined decode of a latent stack conditioned on the resampled input.
    Volume refine_decode(const Tensor<T>& z0_hat, const Volume& lq_up) {
        Tape<T> t;
        Var out = refiner.refine(t, reg, t.input(z0_hat), t.input(volume_to_tensor<T>(lq_up)));
        return tensor_to_volume(t.val(out));
    }

    // Plain decode (refinement branch disabled).
    Volume plain_decode(const Tensor<T>& z0_hat) {
        Tape<T> t;
        return tensor_to_volume(t.val(refiner.plain(t, reg, t.input(z0_hat))));
    }
};

}  // namespace vdr
