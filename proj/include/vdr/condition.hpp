#pragma once

#include <cmath>
#include <string>

#include "vdr/common.hpp"
#include "vdr/nn.hpp"
#include "vdr/tape.hpp"

namespace vdr {

// Sinusoidal features for a (continuous) timestep, computed host-side since
// no gradient flows into t.  Frequencies follow the classic geometric ladder
// 10000^{-i/half}; layout is [sin..., cos...].
template <typename T>
Tensor<T> timestep_features(double t, int64_t dim) {
    if (dim < 2 || dim % 2 != 0) throw UsageError("timestep_features: dim must be even and >= 2");
    const int64_t half = dim / 2;
    Tensor<T> out({1, dim});
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        out[i] = static_cast<T>(std::sin(t * freq));
        out[half + i] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

// Two-layer MLP lifting sinusoidal timestep features into the conditioning
// width shared with the global context vector.
template <typename T>
struct TimeEmbed {
    LinearLayer<T> fc1, fc2;
    int64_t dim = 0;

    TimeEmbed() = default;
    TimeEmbed(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim_, Rng& rng)
        : fc1(reg, prefix + ".fc1", dim_, dim_, rng),
          fc2(reg, prefix + ".fc2", dim_, dim_, rng),
          dim(dim_) {}

    // -> [1, dim]
    Var apply(Tape<T>& t, ParamRegistry<T>& reg, double timestep) const {
        Var feats = t.input(timestep_features<T>(timestep, dim));
        return fc2.apply(t, reg, t.silu(fc1.apply(t, reg, feats)));
    }
};

// Local condition encoder: degraded volume plus a mask channel (zeros when no
// mask conditioning is active) -> latent-resolution feature grid aligned with
// the codec latents.  Slice-wise, 8x lateral downsample.
template <typename T>
struct LocalConditionEncoder {
    static constexpr int64_t kFactor = 8;
    int64_t out_channels = 4;
    Conv2dLayer<T> c1, c2, c3, c4;

    LocalConditionEncoder() = default;
    LocalConditionEncoder(ParamRegistry<T>& reg, const std::string& prefix, int64_t out_channels_,
                          Rng& rng)
        : out_channels(out_channels_),
          c1(reg, prefix + ".c1", 2, 16, 3, 2, 1, rng),
          c2(reg, prefix + ".c2", 16, 32, 3, 2, 1, rng),
          c3(reg, prefix + ".c3", 32, 32, 3, 2, 1, rng),
          c4(reg, prefix + ".c4", 32, out_channels_, 3, 1, 1, rng) {}

    // [D, 2, H, W] -> [D, C, H/8, W/8]
    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        const auto& s = t.val(x).shape();
        if (s.size() != 4 || s[1] != 2)
            throw DataError("local condition encoder: expected [D, 2, H, W]");
        if (s[2] % kFactor != 0 || s[3] % kFactor != 0)
            throw DataError("local condition encoder: H and W must be multiples of 8");
        Var h = t.gelu(c1.apply(t, reg, x));
        h = t.gelu(c2.apply(t, reg, h));
        h = t.gelu(c3.apply(t, reg, h));
        return c4.apply(t, reg, h);
    }
};

// Global context encoder: a strided conv stack pooled over every slice and
// lateral position, then projected to the conditioning width.  The result is
// a single vector summarising acquisition-wide appearance.
template <typename T>
struct GlobalConditionEncoder {
    Conv2dLayer<T> c1, c2, c3, c4;
    LinearLayer<T> proj;
    int64_t dim = 0;

    GlobalConditionEncoder() = default;
    GlobalConditionEncoder(ParamRegistry<T>& reg, const std::string& prefix, int64_t dim_,
                           Rng& rng)
        : c1(reg, prefix + ".c1", 1, 8, 3, 2, 1, rng),
          c2(reg, prefix + ".c2", 8, 16, 3, 2, 1, rng),
          c3(reg, prefix + ".c3", 16, 32, 3, 2, 1, rng),
          c4(reg, prefix + ".c4", 32, 64, 3, 2, 1, rng),
          proj(reg, prefix + ".proj", 64, dim_, rng),
          dim(dim_) {}

    // [D, 1, H, W] -> [1, dim]
    Var apply(Tape<T>& t, ParamRegistry<T>& reg, Var x) const {
        const auto& s = t.val(x).shape();
        if (s.size() != 4 || s[1] != 1)
            throw DataError("global condition encoder: expected [D, 1, H, W]");
        Var h = t.gelu(c1.apply(t, reg, x));
        h = t.gelu(c2.apply(t, reg, h));
        h = t.gelu(c3.apply(t, reg, h));
        h = t.gelu(c4.apply(t, reg, h));
        Var pooled = t.reshape(t.mean_bhw(h), {1, 64});
        return proj.apply(t, reg, pooled);
    }
};

}  // namespace vdr
